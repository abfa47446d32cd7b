"""Quadratic loss models, their noise covariance, and ball domains.

The loss is a global quadratic bowl

    L(theta) = L* + beta * 1/2 * alpha * (theta - theta*)^T H* (theta - theta*)

where ``alpha`` is the sharpness map ``L(theta) -> L(sqrt(alpha) theta)``
(applied relative to the minimizer) and ``beta`` the depth map
``L -> beta L``. Both maps multiply the Hessian, so the *effective* Hessian is
``alpha * beta * H*``. The minimum value is left unscaled so that
``loss_eval(minimizer) == min_value`` exactly.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LandscapeError

SYMMETRY_RTOL = 1e-12


class CovarianceModel(enum.Enum):
    HESSIAN = "hessian"
    IDENTITY = "identity"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _as_vector(theta, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 0:
        theta = theta.reshape(1)
    if theta.shape != (dim,):
        raise DimensionError(f"expected a vector of dimension {dim}, got shape {theta.shape}")
    return theta


def _sym_eigh(matrix: np.ndarray):
    w, q = np.linalg.eigh(matrix)
    return w, q


@dataclass(frozen=True, eq=False)
class Landscape:
    """Quadratic loss model with optional sharpness/depth scaling.

    Arrays are stored read-only; the object is safe to share between workers.
    """

    hessian: np.ndarray
    minimizer: np.ndarray
    min_value: float = 0.0
    sharpness_scale: float = 1.0
    depth_scale: float = 1.0
    covariance_model: CovarianceModel = CovarianceModel.HESSIAN
    _eig: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.hessian, dtype=np.float64))
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise LandscapeError(f"hessian must be square, got shape {h.shape}")
        d = h.shape[0]
        scale = max(np.max(np.abs(h)), np.finfo(float).tiny)
        if np.max(np.abs(h - h.T)) > SYMMETRY_RTOL * scale:
            raise LandscapeError("hessian is not symmetric")
        h = 0.5 * (h + h.T)
        w, q = _sym_eigh(h)
        if not np.all(np.isfinite(w)) or w[0] <= 0.0:
            raise LandscapeError(f"hessian must be positive definite (min eigenvalue {w[0]:g})")
        m = np.asarray(self.minimizer, dtype=np.float64).reshape(-1)
        if m.shape != (d,):
            raise DimensionError(f"minimizer has dimension {m.shape[0]}, hessian has {d}")
        if not np.all(np.isfinite(m)):
            raise LandscapeError("minimizer must be finite")
        for name in ("sharpness_scale", "depth_scale"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0.0):
                raise LandscapeError(f"{name} must be a positive finite number, got {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "min_value", float(self.min_value))
        object.__setattr__(self, "covariance_model", CovarianceModel(self.covariance_model))
        object.__setattr__(self, "hessian", _frozen(h))
        object.__setattr__(self, "minimizer", _frozen(m))
        object.__setattr__(self, "_eig", (_frozen(w), _frozen(q)))

    @classmethod
    def diagonal(cls, diag, minimizer=None, **kwargs) -> "Landscape":
        diag = np.atleast_1d(np.asarray(diag, dtype=np.float64))
        if minimizer is None:
            minimizer = np.zeros(diag.size)
        return cls(np.diag(diag), minimizer, **kwargs)

    def replace(self, **changes) -> "Landscape":
        kwargs = dict(
            hessian=self.hessian,
            minimizer=self.minimizer,
            min_value=self.min_value,
            sharpness_scale=self.sharpness_scale,
            depth_scale=self.depth_scale,
            covariance_model=self.covariance_model,
        )
        kwargs.update(changes)
        return Landscape(**kwargs)

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]

    @property
    def scale(self) -> float:
        return self.sharpness_scale * self.depth_scale

    @functools.cached_property
    def effective_hessian(self) -> np.ndarray:
        return _frozen(self.scale * self.hessian)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues of the effective Hessian."""
        return self.scale * self._eig[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eig[1]

    def check(self, theta) -> np.ndarray:
        return _as_vector(theta, self.dim)


def loss_eval(landscape: Landscape, theta) -> float:
    x = landscape.check(theta) - landscape.minimizer
    return landscape.min_value + 0.5 * float(x @ landscape.effective_hessian @ x)


def gradient(landscape: Landscape, theta) -> np.ndarray:
    x = landscape.check(theta) - landscape.minimizer
    return landscape.effective_hessian @ x


def sharpness(landscape: Landscape) -> float:
    """Largest eigenvalue of the effective Hessian."""
    return float(landscape.eigenvalues[-1])


def condition_number(landscape: Landscape) -> float:
    w = covariance_eigenvalues(landscape)
    return float(w[-1] / w[0])


def covariance(landscape: Landscape, theta=None) -> np.ndarray:
    """Gradient-noise covariance; constant in ``theta`` for both models."""
    if theta is not None:
        landscape.check(theta)
    if landscape.covariance_model is CovarianceModel.IDENTITY:
        return np.eye(landscape.dim)
    return np.array(landscape.effective_hessian)


def covariance_eigenvalues(landscape: Landscape) -> np.ndarray:
    if landscape.covariance_model is CovarianceModel.IDENTITY:
        return np.ones(landscape.dim)
    return np.array(landscape.eigenvalues)


def matrix_power_spd(matrix, power: float) -> np.ndarray:
    """``matrix ** power`` for a symmetric positive-definite matrix."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    w, q = np.linalg.eigh(0.5 * (matrix + matrix.T))
    if w[0] <= 0.0:
        raise LandscapeError(f"matrix is not positive definite (min eigenvalue {w[0]:g})")
    return (q * w**power) @ q.T


def covariance_sqrt(landscape: Landscape, theta=None) -> np.ndarray:
    """Symmetric square root of the covariance (by eigendecomposition)."""
    return matrix_power_spd(covariance(landscape, theta), 0.5)


@dataclass(frozen=True, eq=False)
class Domain:
    """Euclidean ball ``{theta : |theta - center| < radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        r = float(self.radius)
        if not (np.isfinite(r) and r > 0.0):
            raise LandscapeError(f"domain radius must be positive, got {r}")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "radius", r)

    @classmethod
    def around(cls, landscape: Landscape, radius: float) -> "Domain":
        return cls(landscape.minimizer, radius)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, theta) -> bool:
        x = _as_vector(theta, self.dim) - self.center
        return bool(x @ x <= self.radius**2)

    def normal(self, theta) -> np.ndarray:
        return (_as_vector(theta, self.dim) - self.center) / self.radius


def _check_centered(landscape: Landscape, domain: Domain):
    if domain.dim != landscape.dim:
        raise DimensionError(f"domain dimension {domain.dim} != landscape dimension {landscape.dim}")
    if not np.array_equal(domain.center, landscape.minimizer):
        raise LandscapeError("domain must be centered at the landscape minimizer")


def depth(landscape: Landscape, domain: Domain) -> float:
    """Barrier height: minimum boundary loss minus the minimum value."""
    _check_centered(landscape, domain)
    return 0.5 * float(landscape.eigenvalues[0]) * domain.radius**2


def flattest_boundary_points(landscape: Landscape, domain: Domain) -> np.ndarray:
    """The two boundary points along the flattest eigendirection."""
    _check_centered(landscape, domain)
    v = landscape.eigenvectors[:, 0]
    return np.stack([domain.center + domain.radius * v, domain.center - domain.radius * v])


def sphere_points(dim: int, n: int) -> np.ndarray:
    """Deterministic, evenly spread unit vectors in ``R^dim``.

    1-D alternates between +1 and -1, 2-D uses equally spaced angles, 3-D a
    Fibonacci lattice, and higher dimensions an unscrambled Halton sequence
    pushed through the normal quantile and normalized.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    i = np.arange(n)
    if dim == 1:
        return np.where(i % 2 == 0, 1.0, -1.0).reshape(n, 1)
    if dim == 2:
        ang = 2.0 * np.pi * (i + 0.5) / n
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if dim == 3:
        z = 1.0 - 2.0 * (i + 0.5) / n
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i
        s = np.sqrt(1.0 - z * z)
        return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    from scipy.special import ndtri
    from scipy.stats import qmc

    u = qmc.Halton(d=dim, scramble=False).random(n + 1)[1:]
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def boundary_points(domain: Domain, n: int) -> np.ndarray:
    return domain.center + domain.radius * sphere_points(domain.dim, n)


@dataclass(frozen=True)
class ValidationReport:
    n_samples: int
    inward_drift: bool
    attracted: bool
    min_inward_margin: float
    max_flow_steps: int
    step_budget: int

    @property
    def passed(self) -> bool:
        return self.inward_drift and self.attracted


def validate_domain(landscape: Landscape, domain: Domain, n_samples: int = 64) -> ValidationReport:
    """Check inward drift on the boundary and attraction of the gradient flow.

    Explicit Euler with step ``1/lambda_max`` is used for the flow; it
    contracts every eigencomponent, so the check is exact in spirit for
    quadratic losses.
    """
    _check_centered(landscape, domain)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    pts = boundary_points(domain, n_samples)
    normals = (pts - domain.center) / domain.radius
    drift = -(pts - landscape.minimizer) @ landscape.effective_hessian
    margins = -np.einsum("ij,ij->i", drift, normals)
    inward = bool(np.all(margins > 0.0))

    lam = landscape.eigenvalues
    dt = 1.0 / lam[-1]
    budget = int(np.ceil(20.0 * lam[-1] / lam[0])) + 100
    target2 = (domain.radius / 100.0) ** 2
    r2 = domain.radius**2 * (1.0 + 1e-12)
    a = landscape.effective_hessian
    x = pts - domain.center
    steps = np.zeros(n_samples, dtype=np.int64)
    active = np.ones(n_samples, dtype=bool)
    stayed = np.ones(n_samples, dtype=bool)
    for k in range(1, budget + 1):
        x = x - dt * (x @ a)
        n2 = np.einsum("ij,ij->i", x, x)
        stayed &= n2 <= r2
        newly = active & (n2 < target2)
        steps[newly] = k
        active &= ~newly
        if not active.any():
            break
    attracted = bool(not active.any() and stayed.all())
    return ValidationReport(
        n_samples=n_samples,
        inward_drift=inward,
        attracted=attracted,
        min_inward_margin=float(margins.min()),
        max_flow_steps=int(steps.max()),
        step_budget=budget,
    )


def compensated_radius(radius: float, sharpness_scale: float, compensate: bool = True) -> float:
    """Radius that keeps the depth fixed under the sharpness map.

    ``L(sqrt(alpha) x)`` reaches the old boundary loss at ``|x| = r / sqrt(alpha)``.
    """
    return radius / np.sqrt(sharpness_scale) if compensate else radius
