"""Mean exit time of a 1-D Ornstein-Uhlenbeck process from ``(-r, r)``.

For ``dX = -lam X dt + sigma dW`` the mean exit time ``u`` solves the
Dynkin boundary-value problem

    (sigma^2 / 2) u'' - lam x u' = -1,    u(-r) = u(r) = 0.

Two independent solvers are provided: nested quadrature of the closed-form
solution and a second-order finite-difference discretization.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, linalg, special


def _check(lam, sigma, radius, x0):
    if lam <= 0 or sigma <= 0 or radius <= 0:
        raise ValueError("lam, sigma and radius must be positive")
    if abs(x0) > radius:
        raise ValueError("start point lies outside the interval")


def ou_mean_exit_time(lam: float, sigma: float, radius: float, x0: float = 0.0) -> float:
    """Quadrature solution ``u(x0)``.

    With ``c = lam / sigma^2``, ``u(x0) = (2/sigma^2) int_{|x0|}^r e^{c y^2}
    int_0^y e^{-c z^2} dz dy``; the inner integral is an error function.
    """
    _check(lam, sigma, radius, x0)
    c = lam / sigma**2
    sc = math.sqrt(c)
    half_sqrt_pi = 0.5 * math.sqrt(math.pi)

    def integrand(y):
        return math.exp(c * y * y) * half_sqrt_pi * special.erf(sc * y) / sc

    val, _ = integrate.quad(integrand, abs(x0), radius, epsabs=0.0, epsrel=1e-12, limit=200)
    return 2.0 / sigma**2 * val


def ou_mean_exit_time_fd(lam: float, sigma: float, radius: float, x0: float = 0.0,
                         n: int = 20001) -> float:
    """Finite-difference solution on ``n`` uniform nodes, interpolated at ``x0``."""
    _check(lam, sigma, radius, x0)
    x = np.linspace(-radius, radius, n)
    h = x[1] - x[0]
    xi = x[1:-1]
    diff = 0.5 * sigma**2 / h**2
    adv = lam * xi / (2.0 * h)
    lower = diff + adv  # coefficient of u_{i-1}
    main = np.full(xi.size, -2.0 * diff)
    upper = diff - adv  # coefficient of u_{i+1}
    ab = np.zeros((3, xi.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = main
    ab[2, :-1] = lower[1:]
    u = np.zeros(n)
    u[1:-1] = linalg.solve_banded((1, 1), ab, -np.ones(xi.size))
    return float(np.interp(x0, x, u))
