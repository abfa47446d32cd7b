"""First-exit detection and Monte Carlo estimates of mean exit time.

Exit is checked only at the sampled times (``k * dt``, or ``k * eta`` for
discrete SGD); there is no boundary-crossing interpolation. Trial ``i`` of a
run with master seed ``s`` draws from stream ``(s, i)``, so results do not
depend on how trials are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels
from .dynamics import DynamicsConfig, Path, kernel_args
from .errors import NumericalError
from .landscape import Domain, Landscape
from .rng import RngStream, check_seed

Z95 = 1.959963984540054


def set_threads(n: int | None) -> int:
    """Cap the number of compiled worker threads; results do not depend on it."""
    if n is not None:
        n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
    return numba.get_num_threads()


@dataclass(frozen=True, eq=False)
class ExitRecord:
    exited: bool
    exit_time: float
    exit_step: int
    exit_point: np.ndarray


@dataclass(frozen=True, eq=False)
class ExitTrials:
    """Per-trial outcomes of a Monte Carlo run, in trial-index order."""

    exited: np.ndarray
    exit_step: np.ndarray
    exit_time: np.ndarray
    dt: float
    max_steps: int

    @property
    def n_trials(self) -> int:
        return self.exited.shape[0]


@dataclass(frozen=True)
class ExitStats:
    n_trials: int
    n_censored: int
    mean_exit_time: float
    ci_halfwidth: float
    log_mean_exit_time: float
    escape_efficiency: float
    unreliable: bool = False

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_trials

    @property
    def log_stderr(self) -> float:
        """Standard error of ``log_mean_exit_time`` (delta method)."""
        if self.mean_exit_time <= 0:
            return math.inf
        return self.ci_halfwidth / (Z95 * self.mean_exit_time)

    def ci(self) -> tuple[float, float]:
        return self.mean_exit_time - self.ci_halfwidth, self.mean_exit_time + self.ci_halfwidth


def _prepare(initial, config, landscape, domain):
    if domain.dim != landscape.dim:
        raise ValueError("domain and landscape dimensions differ")
    x0 = np.array(landscape.check(initial), dtype=np.float64)
    a, _, s, drift_dt, scale, stochastic = kernel_args(config, landscape)
    c = np.ascontiguousarray(domain.center)
    if not np.array_equal(c, landscape.minimizer):
        # the kernel measures distance from its ``c`` argument; the drift is
        # centered on the minimizer, so only centered domains are supported
        raise ValueError("domain must be centered at the landscape minimizer")
    return x0, a, c, s, drift_dt, scale, stochastic


def exit_trials(initial, config: DynamicsConfig, landscape: Landscape, domain: Domain,
                n_trials: int, max_steps: int, master_seed: int, first_stream: int = 0) -> ExitTrials:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    seed = check_seed(master_seed)
    x0, a, c, s, drift_dt, scale, stochastic = _prepare(initial, config, landscape, domain)
    status = np.empty(n_trials, dtype=np.int64)
    steps = np.empty(n_trials, dtype=np.int64)
    points = np.empty((n_trials, landscape.dim))
    _kernels.exit_trials(x0, a, c, s, drift_dt, scale, stochastic, domain.radius**2,
                         np.int64(max_steps), np.uint64(seed), np.uint64(first_stream),
                         status, steps, points)
    bad = np.flatnonzero(status < 0)
    if bad.size:
        i = int(bad[0])
        raise NumericalError(f"non-finite state in trial {i} at step {int(steps[i])}",
                             step=int(steps[i]), trial=i)
    return ExitTrials(exited=status == 1, exit_step=steps, exit_time=steps * config.dt,
                      dt=config.dt, max_steps=max_steps)


def first_exit(initial, config: DynamicsConfig, landscape: Landscape, domain: Domain,
               max_steps: int, rng_stream: RngStream) -> ExitRecord:
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    x0, a, c, s, drift_dt, scale, stochastic = _prepare(initial, config, landscape, domain)
    status = np.empty(1, dtype=np.int64)
    steps = np.empty(1, dtype=np.int64)
    points = np.empty((1, landscape.dim))
    _kernels.exit_trials(x0, a, c, s, drift_dt, scale, stochastic, domain.radius**2,
                         np.int64(max_steps), np.uint64(rng_stream.seed),
                         np.uint64(rng_stream.stream_id), status, steps, points)
    k = int(steps[0])
    if status[0] < 0:
        raise NumericalError(f"non-finite state at step {k}", step=k)
    return ExitRecord(exited=bool(status[0] == 1), exit_time=k * config.dt, exit_step=k,
                      exit_point=points[0].copy())


def summarize(trials: ExitTrials) -> ExitStats:
    """Aggregate trials; censored trials contribute the horizon."""
    n = trials.n_trials
    t = trials.exit_time
    n_cens = int(n - np.count_nonzero(trials.exited))
    mean = float(np.mean(t))
    sd = float(np.std(t, ddof=1)) if n > 1 else math.inf
    half = Z95 * sd / math.sqrt(n)
    with np.errstate(divide="ignore"):
        log_mean = float(np.log(mean))
    eff = 1.0 / mean if mean > 0 else math.inf
    return ExitStats(n_trials=n, n_censored=n_cens, mean_exit_time=mean, ci_halfwidth=half,
                     log_mean_exit_time=log_mean, escape_efficiency=eff,
                     unreliable=n_cens == n)


def mean_exit_time(initial, config: DynamicsConfig, landscape: Landscape, domain: Domain,
                   n_trials: int, max_steps: int, master_seed: int) -> ExitStats:
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    return summarize(exit_trials(initial, config, landscape, domain, n_trials, max_steps, master_seed))


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class TubeEstimate:
    probability: float
    ci_low: float
    ci_high: float
    n_inside: int
    n_trials: int


def tube_probability(reference: Path, config: DynamicsConfig, landscape: Landscape, delta: float,
                     n_trials: int, master_seed: int) -> TubeEstimate:
    """Monte Carlo estimate of ``P(max_k |theta_k - phi_k| < delta)``.

    The trajectories start at ``reference.points[0]`` and are sampled on the
    reference grid, whose spacing must equal the dynamics step.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if not math.isclose(reference.h, config.dt, rel_tol=1e-9):
        raise ValueError(f"reference grid spacing {reference.h} != dynamics step {config.dt}")
    seed = check_seed(master_seed)
    ref = np.ascontiguousarray(reference.points)
    x0 = np.array(landscape.check(ref[0]))
    a, c, s, drift_dt, scale, stochastic = kernel_args(config, landscape)
    inside = np.empty(n_trials, dtype=np.bool_)
    _kernels.tube_trials(x0, a, c, s, drift_dt, scale, stochastic, ref, float(delta) ** 2,
                         np.uint64(seed), inside)
    k = int(np.count_nonzero(inside))
    lo, hi = wilson_interval(k, n_trials)
    return TubeEstimate(probability=k / n_trials, ci_low=lo, ci_high=hi, n_inside=k, n_trials=n_trials)
