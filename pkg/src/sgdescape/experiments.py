"""Parameter sweeps of the mean exit time, the proxy reference run and the
discretization-order study.

Each sweep varies one knob (sharpness scale, learning rate, batch size or
depth), measures the mean exit time at every grid point and fits
``ln E[exit]`` against the regressor the escape theory predicts to enter
linearly: ``lam_max^{-1/2}``, ``1/eta``, ``B`` or ``Delta L``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .action import quasi_potential
from .dynamics import DynamicsConfig, DynamicsKind
from .exit_mc import ExitStats, mean_exit_time
from .landscape import Domain, Landscape, compensated_radius, depth, sharpness

MAX_CENSORED = 0.05


class SweepKind(enum.Enum):
    ALPHA = "alpha"
    ETA = "eta"
    BATCH = "batch"
    BETA = "beta"


REGRESSOR_LABELS = {
    SweepKind.ALPHA: "lambda_max^(-1/2)",
    SweepKind.ETA: "1/eta",
    SweepKind.BATCH: "B",
    SweepKind.BETA: "Delta L",
}


@dataclass(frozen=True, eq=False)
class RunSpec:
    """Everything needed for one mean-exit-time estimate.

    The domain is the ball of ``radius`` around the minimizer; trials start
    at the minimizer.
    """

    landscape: Landscape
    radius: float
    dynamics: DynamicsConfig
    n_trials: int = 1000
    max_steps: int = 1_000_000
    seed: int = 0
    compensate_radius: bool = True

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.n_trials < 2:
            raise ValueError("n_trials must be >= 2")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def replace(self, **changes) -> "RunSpec":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return RunSpec(**kw)

    def domain(self) -> Domain:
        return Domain.around(self.landscape, self.radius)


@dataclass(frozen=True, eq=False)
class SweepSpec:
    swept: SweepKind
    grid: tuple
    base: RunSpec
    # (lo, hi) band for V0 / eps^2; None keeps the base radius
    regime_target: tuple | None = (2.0, 8.0)

    def __post_init__(self):
        object.__setattr__(self, "swept", SweepKind(self.swept))
        grid = tuple(float(g) for g in self.grid)
        if len(grid) < 3:
            raise ValueError("a sweep grid needs at least 3 points")
        if any(not (g > 0 and math.isfinite(g)) for g in grid):
            raise ValueError("grid values must be positive and finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        if self.regime_target is not None:
            lo, hi = (float(v) for v in self.regime_target)
            if not 0 < lo < hi:
                raise ValueError("regime_target must satisfy 0 < lo < hi")
            object.__setattr__(self, "regime_target", (lo, hi))


@dataclass(frozen=True, eq=False)
class SweepPoint:
    swept_value: float
    regressor: float
    stats: ExitStats
    landscape: Landscape
    domain: Domain
    dynamics: DynamicsConfig
    regime_ratio: float = math.nan


@dataclass(frozen=True, eq=False)
class SweepResult:
    swept: SweepKind
    points: list
    slope: float
    intercept: float
    pearson_r: float
    slope_stderr: float
    radius: float
    flagged: bool = False
    flags: list = field(default_factory=list)

    @property
    def regressors(self) -> np.ndarray:
        return np.array([p.regressor for p in self.points])

    @property
    def log_means(self) -> np.ndarray:
        return np.array([p.stats.log_mean_exit_time for p in self.points])


def fit_line(xs, ys) -> tuple[float, float, float]:
    """Least-squares ``y = slope * x + intercept`` and Pearson ``r``.

    Constant ``ys`` give slope 0 and ``r = 0`` by convention.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D of equal length")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("points must be finite")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("xs are all equal")
    dy = y - y.mean()
    syy = float(dy @ dy)
    if syy == 0.0:
        return 0.0, float(y.mean()), 0.0
    sxy = float(dx @ dy)
    slope = sxy / sxx
    r = max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))
    return slope, float(y.mean() - slope * x.mean()), r


def slope_stderr(xs, log_stderrs) -> float:
    """Monte Carlo standard error of the OLS slope from per-point errors."""
    x = np.asarray(xs, dtype=np.float64)
    se = np.asarray(log_stderrs, dtype=np.float64)
    dx = x - x.mean()
    w = dx / float(dx @ dx)
    return float(math.sqrt(np.sum((w * se) ** 2)))


def point_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def _point_setup(swept: SweepKind, value: float, base: RunSpec, radius: float):
    landscape, dyn = base.landscape, base.dynamics
    if swept is SweepKind.ALPHA:
        landscape = landscape.replace(sharpness_scale=landscape.sharpness_scale * value)
        radius = compensated_radius(radius, value, base.compensate_radius)
    elif swept is SweepKind.BETA:
        # fixed quadratic, barrier scaled through the radius; see notes
        radius = radius * math.sqrt(value)
    elif swept is SweepKind.ETA:
        dyn = dyn.replace(eta=value)
    else:
        dyn = dyn.replace(batch=value)
    return landscape, Domain.around(landscape, radius), dyn


def regressor(swept: SweepKind, landscape: Landscape, domain: Domain, dynamics: DynamicsConfig) -> float:
    if swept is SweepKind.ALPHA:
        return sharpness(landscape) ** -0.5
    if swept is SweepKind.ETA:
        return 1.0 / dynamics.eta
    if swept is SweepKind.BATCH:
        return dynamics.batch
    return depth(landscape, domain)


def regime_ratio(landscape: Landscape, domain: Domain, dynamics: DynamicsConfig) -> float:
    """``V0 / eps^2`` with the quasi-potential matching the dynamics' noise."""
    proxy = dynamics.kind in (DynamicsKind.PROXY, DynamicsKind.GRADIENT_FLOW)
    v0 = quasi_potential(landscape, domain, proxy=proxy, cross_check=False).value
    return v0 / dynamics.noise_amplitude**2


def select_radius(spec: SweepSpec) -> tuple[float, list, bool]:
    """Scale the base radius so the grid's ``V0 / eps^2`` values are centered
    (geometrically) in the target band.

    ``V0`` is quadratic in the radius for a quadratic loss, so one pass of
    quasi-potential solves fixes the scale. Returns the radius, the resulting
    ratios and whether they all fit in the band.
    """
    lo, hi = spec.regime_target
    r0 = spec.base.radius
    ratios = [regime_ratio(*_point_setup(spec.swept, v, spec.base, r0)) for v in spec.grid]
    center = math.exp(np.mean(np.log(ratios)))
    s2 = math.sqrt(lo * hi) / center
    radius = r0 * math.sqrt(s2)
    ratios = [q * s2 for q in ratios]
    fits = all(lo * (1 - 1e-9) <= q <= hi * (1 + 1e-9) for q in ratios)
    return radius, ratios, fits


def run_sweep(spec: SweepSpec) -> SweepResult:
    flags = []
    if spec.regime_target is not None:
        radius, ratios, fits = select_radius(spec)
        if not fits:
            flags.append("regime: V0/eps^2 spread exceeds the target band")
    else:
        radius, ratios = spec.base.radius, [math.nan] * len(spec.grid)
    base = spec.base
    points = []
    for i, value in enumerate(spec.grid):
        landscape, domain, dyn = _point_setup(spec.swept, value, base, radius)
        stats = mean_exit_time(landscape.minimizer, dyn, landscape, domain, base.n_trials,
                               base.max_steps, point_seed(base.seed, i))
        if stats.censored_fraction >= MAX_CENSORED:
            flags.append(f"censoring: {stats.n_censored}/{stats.n_trials} at {value!r}")
        points.append(SweepPoint(value, regressor(spec.swept, landscape, domain, dyn), stats,
                                 landscape, domain, dyn, ratios[i]))
    xs = [p.regressor for p in points]
    ys = [p.stats.log_mean_exit_time for p in points]
    if all(math.isfinite(y) for y in ys):
        slope, intercept, r = fit_line(xs, ys)
        se = slope_stderr(xs, [p.stats.log_stderr for p in points])
    else:
        flags.append("fit: non-finite log mean exit time")
        slope = intercept = r = se = math.nan
    return SweepResult(spec.swept, points, slope, intercept, r, se, radius, bool(flags), flags)


def cis_pairwise_overlap(points) -> bool:
    """True when every pair of 95% confidence intervals intersects."""
    lows = [p.stats.mean_exit_time - p.stats.ci_halfwidth for p in points]
    highs = [p.stats.mean_exit_time + p.stats.ci_halfwidth for p in points]
    return max(lows) <= min(highs)


@dataclass(frozen=True, eq=False)
class ProxyReference:
    sweep: SweepResult
    cis_overlap: bool
    slope_zero: bool  # |slope| <= 2 standard errors


def proxy_reference(spec: SweepSpec) -> ProxyReference:
    """Sharpness sweep of the isotropic proxy system at fixed depth."""
    if spec.swept is not SweepKind.ALPHA:
        raise ValueError("proxy reference needs an alpha sweep")
    if not spec.base.compensate_radius:
        raise ValueError("proxy reference needs radius compensation (fixed depth)")
    base = spec.base.replace(dynamics=spec.base.dynamics.replace(kind=DynamicsKind.PROXY))
    res = run_sweep(SweepSpec(spec.swept, spec.grid, base, spec.regime_target))
    zero = math.isfinite(res.slope) and abs(res.slope) <= 2.0 * res.slope_stderr
    return ProxyReference(res, cis_pairwise_overlap(res.points), zero)


@dataclass(frozen=True, eq=False)
class DiscretizationPoint:
    eta: float
    batch: float
    discrete: ExitStats
    continuous: ExitStats
    error: float
    combined_ci: float
    dropped: bool


@dataclass(frozen=True, eq=False)
class DiscretizationResult:
    points: list
    epsilon: float
    slope: float
    intercept: float
    flagged: bool


def discretization_study(base: RunSpec, eta_grid, ref_factor: int = 64,
                         epsilon: float | None = None) -> DiscretizationResult:
    """Discrete-SGD exit time against continuous SGD at fine step, per ``eta``.

    The noise amplitude ``eps = sqrt(eta / B)`` is held fixed (``B`` co-varies
    with ``eta``) so the continuous process is the same at every grid point.
    The reference uses step ``eta / ref_factor``. Both systems of a grid point
    share one seed. Points whose error is inside the combined 95% CI are
    dropped from the fit of ``log|error|`` against ``log eta``.
    """
    etas = [float(e) for e in eta_grid]
    if len(etas) < 4:
        raise ValueError("eta grid needs at least 4 points")
    ratios = np.array(etas[1:]) / np.array(etas[:-1])
    if np.any(ratios <= 1.0) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("eta grid must be increasing and geometric")
    if ref_factor < 1:
        raise ValueError("ref_factor must be >= 1")
    eps = base.dynamics.noise_amplitude if epsilon is None else float(epsilon)
    domain = base.domain()
    x0 = base.landscape.minimizer
    points = []
    for i, eta in enumerate(etas):
        batch = eta / eps**2
        if batch < 1.0:
            raise ValueError(f"eta={eta!r} needs batch {batch!r} < 1 to keep eps={eps!r}")
        seed = point_seed(base.seed, i)
        disc = DynamicsConfig(DynamicsKind.DISCRETE_SGD, eta, batch)
        cont = DynamicsConfig(DynamicsKind.CONTINUOUS_SGD, eta, batch, dt=eta / ref_factor)
        sd = mean_exit_time(x0, disc, base.landscape, domain, base.n_trials, base.max_steps, seed)
        sc = mean_exit_time(x0, cont, base.landscape, domain, base.n_trials,
                            base.max_steps * ref_factor, seed)
        err = sd.mean_exit_time - sc.mean_exit_time
        ci = math.hypot(sd.ci_halfwidth, sc.ci_halfwidth)
        points.append(DiscretizationPoint(eta, batch, sd, sc, err, ci, abs(err) < ci))
    kept = [p for p in points if not p.dropped]
    flagged = len(kept) < len(points)
    if len(kept) >= 2:
        slope, intercept, _ = fit_line(np.log([p.eta for p in kept]), np.log([abs(p.error) for p in kept]))
    else:
        slope = intercept = math.nan
        flagged = True
    return DiscretizationResult(points, eps, slope, intercept, flagged)
