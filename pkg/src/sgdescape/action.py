"""Steepness (action) of discretized paths, minimum-action paths and the
quasi-potential.

The steepness of a path with metric ``M = C^{-p}`` is

    S_T(phi) = 1/2 int_0^T (phi' + grad L(phi))^T M (phi' + grad L(phi)) dt,

with ``p = 1/2`` by default (``p = 1`` gives the classical Freidlin-Wentzell
action). It is discretized with one residual per segment: forward-difference
velocity and the gradient at the segment midpoint. For a quadratic loss the
midpoint gradient is the mean of the end-point gradients, so the discrete
proxy action obeys ``S >= 2 (L(end) - L(start))`` exactly, like the
continuous one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .dynamics import Path
from .landscape import (
    CovarianceModel,
    Domain,
    Landscape,
    boundary_points,
    covariance,
    covariance_eigenvalues,
    depth,
    flattest_boundary_points,
    gradient,
    matrix_power_spd,
    sharpness,
)

DEFAULT_EXPONENT = 0.5
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ActionReport:
    steepness: float
    proxy_steepness: float
    metric_exponent: float


@dataclass(frozen=True)
class OptimizerSettings:
    max_iters: int = 500
    tol: float = 1e-10
    armijo: float = 1e-4


def metric_matrix(landscape: Landscape, metric_exponent: float = DEFAULT_EXPONENT,
                  proxy: bool = False) -> np.ndarray:
    """``C^{-p}`` for the landscape covariance, or ``I`` for the proxy system."""
    if proxy or landscape.covariance_model is CovarianceModel.IDENTITY:
        return np.eye(landscape.dim)
    return matrix_power_spd(covariance(landscape), -metric_exponent)


def _residuals(points: np.ndarray, h: float, landscape: Landscape) -> np.ndarray:
    mid = 0.5 * (points[1:] + points[:-1]) - landscape.minimizer
    return np.diff(points, axis=0) / h + mid @ landscape.effective_hessian


def steepness(path: Path, landscape: Landscape, metric_exponent: float = DEFAULT_EXPONENT) -> ActionReport:
    if path.dim != landscape.dim:
        raise ValueError(f"path dimension {path.dim} != landscape dimension {landscape.dim}")
    if path.n_segments < 2:
        raise ValueError("steepness needs at least 2 segments")
    r = _residuals(path.points, path.h, landscape)
    s_hat = 0.5 * path.h * float(np.einsum("ij,ij->", r, r))
    if landscape.covariance_model is CovarianceModel.IDENTITY:
        s = s_hat
    else:
        m = metric_matrix(landscape, metric_exponent)
        s = 0.5 * path.h * float(np.einsum("ij,jk,ik->", r, m, r))
    return ActionReport(steepness=s, proxy_steepness=s_hat, metric_exponent=metric_exponent)


class ActionFunctional:
    """Discrete action as a function of the interior nodes of a pinned path."""

    def __init__(self, landscape: Landscape, start, end, horizon: float, n_segments: int,
                 metric: np.ndarray):
        if n_segments < 2:
            raise ValueError("need at least 2 segments")
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.landscape = landscape
        self.start = np.array(landscape.check(start), dtype=np.float64)
        self.end = np.array(landscape.check(end), dtype=np.float64)
        self.horizon = float(horizon)
        self.n = int(n_segments)
        self.h = self.horizon / self.n
        self.metric = np.asarray(metric, dtype=np.float64)
        self._a = landscape.effective_hessian
        self._precond = None

    def full_path(self, interior: np.ndarray) -> np.ndarray:
        return np.vstack([self.start, interior, self.end])

    def straight_line(self) -> np.ndarray:
        s = np.linspace(0.0, 1.0, self.n + 1)[1:-1, None]
        return self.start + s * (self.end - self.start)

    def value_and_grad(self, interior: np.ndarray):
        p = self.full_path(interior)
        r = _residuals(p, self.h, self.landscape)
        q = r @ self.metric
        value = 0.5 * self.h * float(np.einsum("ij,ij->", r, q))
        grad = q[:-1] - q[1:] + 0.5 * self.h * ((q[:-1] + q[1:]) @ self._a)
        return value, grad

    def value(self, interior: np.ndarray) -> float:
        return self.value_and_grad(interior)[0]

    def precondition(self, g: np.ndarray) -> np.ndarray:
        """Apply the inverse of ``(1/h) K (x) M + h I (x) A M A``.

        ``K`` is the 1-D Dirichlet Laplacian stencil. The generalized
        eigenvectors ``V`` of ``(A M A, M)`` decouple the dimensions, leaving
        one tridiagonal solve per dimension.
        """
        if self._precond is None:
            b = self._a @ self.metric @ self._a
            mu, v = linalg.eigh(0.5 * (b + b.T), self.metric)
            self._precond = (mu, v)
        mu, v = self._precond
        rhs = g @ v
        out = np.empty_like(rhs)
        m = self.n - 1
        ab = np.empty((2, m))
        for j in range(rhs.shape[1]):
            ab[0, :] = -1.0 / self.h
            ab[1, :] = 2.0 / self.h + self.h * mu[j]
            out[:, j] = linalg.solveh_banded(ab, rhs[:, j])
        return out @ v.T


@dataclass(frozen=True, eq=False)
class MinActionResult:
    path: Path
    action: float
    converged: bool
    iterations: int

    def __iter__(self):
        yield self.path
        yield self.action


def min_action_path(landscape: Landscape, start, end, horizon: float, n_segments: int = 256,
                    settings: OptimizerSettings | None = None,
                    metric_exponent: float = DEFAULT_EXPONENT, proxy: bool = False) -> MinActionResult:
    """Minimize the discrete action over interior nodes with endpoints pinned.

    Preconditioned gradient descent with Armijo backtracking, started from the
    straight line. Stops when the relative decrease drops below
    ``settings.tol`` or after ``settings.max_iters`` iterations (then
    ``converged`` is False and the best iterate is returned).
    """
    if n_segments < 8:
        raise ValueError("n_segments must be >= 8")
    settings = settings or OptimizerSettings()
    fun = ActionFunctional(landscape, start, end, horizon, n_segments,
                           metric_matrix(landscape, metric_exponent, proxy))
    x = fun.straight_line()
    value, g = fun.value_and_grad(x)
    converged = False
    it = 0
    for it in range(1, settings.max_iters + 1):
        direction = -fun.precondition(g)
        slope = float(np.einsum("ij,ij->", g, direction))
        if not slope < 0.0:
            converged = True
            break
        t = 1.0
        while True:
            x_new = x + t * direction
            v_new, g_new = fun.value_and_grad(x_new)
            if v_new <= value + settings.armijo * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                v_new = None
                break
        if v_new is None:
            converged = True
            break
        decrease = value - v_new
        x, value, g = x_new, v_new, g_new
        if decrease <= settings.tol * max(abs(value), np.finfo(float).tiny):
            converged = True
            break
    return MinActionResult(path=Path(fun.full_path(x), horizon), action=value,
                           converged=converged, iterations=it)


def default_t_grid(landscape: Landscape, n: int = 8, lo: float = 1.0, hi: float = 64.0) -> np.ndarray:
    return np.geomspace(lo, hi, n) / sharpness(landscape)


@dataclass(frozen=True)
class ActionRow:
    horizon: float
    boundary_index: int
    action: float
    converged: bool


@dataclass(frozen=True, eq=False)
class QuasiPotentialResult:
    value: float
    boundary_point: np.ndarray
    path: Path
    horizon: float
    converged: bool
    cross_check_ok: bool
    rows: list = field(default_factory=list)


def _golden_section(f, a: float, b: float, iters: int):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)


def quasi_potential(landscape: Landscape, domain: Domain, t_grid=None, n_segments: int = 256,
                    settings: OptimizerSettings | None = None,
                    metric_exponent: float = DEFAULT_EXPONENT, proxy: bool = False,
                    cross_check: bool = True, refine_iters: int = 12) -> QuasiPotentialResult:
    """Minimum boundary quasi-potential ``V0`` from the minimizer.

    Candidates are the two flattest-eigendirection boundary points, swept
    over a logarithmic horizon grid and refined by golden-section search in
    ``log T`` around the best grid horizon. For ``d <= 3`` a 32-point
    boundary grid is also evaluated at the best horizon; ``cross_check_ok``
    reports whether the flattest direction held up, and the smallest action
    seen is returned either way.
    """
    depth(landscape, domain)  # validates centering
    t_grid = default_t_grid(landscape) if t_grid is None else np.sort(np.asarray(t_grid, float))
    if t_grid.size < 1 or np.any(t_grid <= 0):
        raise ValueError("t_grid must hold positive horizons")
    origin = landscape.minimizer
    candidates = flattest_boundary_points(landscape, domain)
    rows: list[ActionRow] = []
    best = None

    def solve(point, horizon, index):
        nonlocal best
        res = min_action_path(landscape, origin, point, horizon, n_segments, settings,
                              metric_exponent, proxy)
        rows.append(ActionRow(float(horizon), index, res.action, res.converged))
        if best is None or res.action < best[0].action:
            best = (res, np.array(point), float(horizon))
        return res.action

    for horizon in t_grid:
        for i, point in enumerate(candidates):
            solve(point, horizon, i)

    if t_grid.size > 1 and refine_iters > 0:
        k = int(np.searchsorted(t_grid, best[2]))
        lo = math.log(t_grid[max(k - 1, 0)])
        hi = math.log(t_grid[min(k + 1, t_grid.size - 1)])
        point = best[1]
        index = next(i for i, c in enumerate(candidates) if np.array_equal(c, point))
        _golden_section(lambda s: solve(point, math.exp(s), index), lo, hi, refine_iters)

    cross_ok = True
    if cross_check and 2 <= landscape.dim <= 3:
        reference = best[0].action
        grid = boundary_points(domain, 32)
        for j, point in enumerate(grid):
            action = solve(point, best[2], len(candidates) + j)
            if action < reference * (1.0 - 1e-6) - 1e-12:
                cross_ok = False

    res, point, horizon = best
    converged = all(r.converged for r in rows)
    return QuasiPotentialResult(value=res.action, boundary_point=point, path=res.path,
                                horizon=horizon, converged=converged, cross_check_ok=cross_ok,
                                rows=rows)


@dataclass(frozen=True)
class GapReport:
    v0: float
    v0_proxy: float
    gap: float
    bound_factor: float
    kappa: float


def gap_report(landscape: Landscape, v0: float, v0_proxy: float,
               metric_exponent: float = DEFAULT_EXPONENT) -> GapReport:
    w = covariance_eigenvalues(landscape)
    lam_min, lam_max = float(w[0]), float(w[-1])
    kappa = lam_max / lam_min
    gap = abs(v0 - lam_max ** (-metric_exponent) * v0_proxy)
    factor = math.sqrt(lam_min) * (math.sqrt(kappa) - 1.0)
    return GapReport(v0=v0, v0_proxy=v0_proxy, gap=gap, bound_factor=factor, kappa=kappa)


def approx_gap(landscape: Landscape, domain: Domain, metric_exponent: float = DEFAULT_EXPONENT,
               **kwargs) -> GapReport:
    """Observed ``|V0 - lam_max^{-p} V0_proxy|`` and ``lam_min^{1/2} (kappa^{1/2} - 1)``.

    Eigenvalues are those of the covariance at the minimizer; ``p`` is the
    metric exponent (1/2 by default).
    """
    v0 = quasi_potential(landscape, domain, metric_exponent=metric_exponent, **kwargs).value
    v0_hat = quasi_potential(landscape, domain, proxy=True, **kwargs).value
    return gap_report(landscape, v0, v0_hat, metric_exponent)


def hj_residual(grad_v, landscape: Landscape, theta, metric_exponent: float = DEFAULT_EXPONENT) -> float:
    """``1/2 dV^T C^p dV - dL^T dV`` at ``theta``; zero for the true quasi-potential."""
    g = np.asarray(landscape.check(grad_v), dtype=np.float64)
    dl = gradient(landscape, theta)
    cp = matrix_power_spd(covariance(landscape, theta), metric_exponent)
    return 0.5 * float(g @ cp @ g) - float(dl @ g)


def quadratic_quasi_potential(landscape: Landscape, theta, metric_exponent: float = DEFAULT_EXPONENT,
                              proxy: bool = False):
    """Closed-form ``V(theta) = x^T C^{-p} H x`` and its gradient, ``x = theta - theta*``.

    Valid because ``C`` is a function of ``H`` for both covariance models, so
    the two commute and the action decouples along eigendirections.
    """
    x = landscape.check(theta) - landscape.minimizer
    w = metric_matrix(landscape, metric_exponent, proxy) @ landscape.effective_hessian
    w = 0.5 * (w + w.T)
    return float(x @ w @ x), 2.0 * (w @ x)
