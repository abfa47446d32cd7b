"""Time-steppers for discrete SGD, continuous SGD, the isotropic proxy system
and the noiseless gradient flow.

Discrete SGD draws ``W_k ~ N(0, eta C)`` and adds ``sqrt(eta/B) W_k``, so the
per-step noise standard deviation along a covariance eigendirection ``c`` is
``eta * sqrt(c / B)``. The continuous systems are integrated by
Euler-Maruyama with step ``dt``; with ``dt == eta`` the two updates coincide.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError
from .landscape import Landscape, covariance_sqrt, gradient
from .rng import RngStream


class DynamicsKind(enum.Enum):
    DISCRETE_SGD = "discrete_sgd"
    CONTINUOUS_SGD = "continuous_sgd"
    PROXY = "proxy"
    GRADIENT_FLOW = "gradient_flow"

    @property
    def stochastic(self) -> bool:
        return self is not DynamicsKind.GRADIENT_FLOW


@dataclass(frozen=True)
class DynamicsConfig:
    """Stepper settings. ``dt`` is forced to ``eta`` for discrete SGD."""

    kind: DynamicsKind
    eta: float
    batch: float = 1.0
    dt: float | None = None

    def __post_init__(self):
        kind = DynamicsKind(self.kind)
        eta = float(self.eta)
        batch = float(self.batch)
        if not (math.isfinite(eta) and eta > 0.0):
            raise ValueError(f"eta must be positive, got {eta}")
        if not (math.isfinite(batch) and batch >= 1.0):
            raise ValueError(f"batch must be >= 1, got {batch}")
        dt = eta if (kind is DynamicsKind.DISCRETE_SGD or self.dt is None) else float(self.dt)
        if not (math.isfinite(dt) and dt > 0.0):
            raise ValueError(f"dt must be positive, got {dt}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "batch", batch)
        object.__setattr__(self, "dt", dt)

    def replace(self, **changes) -> "DynamicsConfig":
        kw = dict(kind=self.kind, eta=self.eta, batch=self.batch, dt=self.dt)
        kw.update(changes)
        return DynamicsConfig(**kw)

    @property
    def noise_amplitude(self) -> float:
        """``sqrt(eta / B)``, the small parameter of the large deviations."""
        return math.sqrt(self.eta / self.batch)

    @property
    def noise_scale(self) -> float:
        """Multiplier of ``S z`` in one step."""
        if self.kind is DynamicsKind.GRADIENT_FLOW:
            return 0.0
        if self.kind is DynamicsKind.DISCRETE_SGD:
            return math.sqrt(self.eta / self.batch) * math.sqrt(self.eta)
        return math.sqrt(self.dt) * math.sqrt(self.eta / self.batch)


def noise_matrix(config: DynamicsConfig, landscape: Landscape) -> np.ndarray:
    if config.kind in (DynamicsKind.PROXY, DynamicsKind.GRADIENT_FLOW):
        return np.eye(landscape.dim)
    return covariance_sqrt(landscape)


def kernel_args(config: DynamicsConfig, landscape: Landscape):
    """Arrays and scalars in the order the compiled kernels expect."""
    return (
        np.ascontiguousarray(landscape.effective_hessian),
        np.ascontiguousarray(landscape.minimizer),
        np.ascontiguousarray(noise_matrix(config, landscape)),
        float(config.dt),
        float(config.noise_scale),
        bool(config.kind.stochastic),
    )


@dataclass(frozen=True, eq=False)
class SimState:
    position: np.ndarray
    time: float = 0.0
    step_count: int = 0


def _as_position(theta, landscape: Landscape) -> np.ndarray:
    return np.array(landscape.check(theta), dtype=np.float64)


def step(state: SimState, config: DynamicsConfig, landscape: Landscape, rng_stream: RngStream | None,
         z=None) -> SimState:
    """Advance one step. Step ``k`` consumes normals ``[k*d, (k+1)*d)``.

    ``z`` overrides the stream with explicit standard normals.
    """
    x = _as_position(state.position, landscape)
    d = landscape.dim
    a, c, s, drift_dt, scale, stochastic = kernel_args(config, landscape)
    if stochastic and z is not None:
        z = np.array(landscape.check(z), dtype=np.float64)
    elif stochastic:
        if rng_stream is None:
            raise ValueError("stochastic dynamics need an rng stream")
        z = rng_stream.normals(state.step_count * d, d)
    else:
        z = np.zeros(d)
    out = np.empty(d)
    _kernels.step_into(x, a, c, s, drift_dt, scale, z, stochastic, out)
    k = state.step_count + 1
    return SimState(position=out, time=k * config.dt, step_count=k)


def sample_moments(config: DynamicsConfig, landscape: Landscape, theta, n: int, rng: RngStream):
    """Empirical mean and covariance of the one-step increment over ``n`` draws."""
    if n < 2:
        raise ValueError("n must be >= 2")
    x = _as_position(theta, landscape)
    drift = -config.dt * gradient(landscape, x)
    d = landscape.dim
    if not config.kind.stochastic:
        return drift, np.zeros((d, d))
    z = rng.normals(0, n * d).reshape(n, d)
    inc = drift + config.noise_scale * (z @ noise_matrix(config, landscape).T)
    return inc.mean(axis=0), np.atleast_2d(np.cov(inc, rowvar=False))


@dataclass(frozen=True, eq=False)
class Path:
    """Trajectory sampled on a uniform grid ``t_k = k * horizon / N``."""

    points: np.ndarray
    horizon: float

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim == 1:
            p = p.reshape(-1, 1)
        if p.ndim != 2 or p.shape[0] < 2:
            raise ValueError("a path needs at least 2 points")
        if not np.all(np.isfinite(p)):
            raise ValueError("path points must be finite")
        if not (self.horizon > 0):
            raise ValueError("path horizon must be positive")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_segments(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def h(self) -> float:
        return self.horizon / self.n_segments

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_segments + 1) * self.h

    def node_velocities(self) -> np.ndarray:
        """Central differences inside, one-sided at the two ends."""
        return np.gradient(self.points, self.h, axis=0, edge_order=1)


def simulate(initial, config: DynamicsConfig, landscape: Landscape, horizon_steps: int,
             rng_stream: RngStream | None) -> Path:
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")
    x0 = _as_position(initial, landscape)
    a, c, s, drift_dt, scale, stochastic = kernel_args(config, landscape)
    if stochastic and rng_stream is None:
        raise ValueError("stochastic dynamics need an rng stream")
    key0 = np.uint64(rng_stream.seed if rng_stream else 0)
    key1 = np.uint64(rng_stream.stream_id if rng_stream else 0)
    out = np.empty((horizon_steps + 1, landscape.dim))
    bad = _kernels.simulate_path(x0, a, c, s, drift_dt, scale, stochastic, key0, key1, out)
    if bad >= 0:
        raise NumericalError(f"non-finite state at step {bad}", step=int(bad))
    return Path(out, horizon_steps * config.dt)
