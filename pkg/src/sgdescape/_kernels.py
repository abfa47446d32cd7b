"""Compiled inner loops for the steppers and Monte Carlo drivers.

All kernels share one update rule,

    x' = x - drift_dt * A (x - c) + noise_scale * S z,

with ``A`` the effective Hessian, ``c`` the minimizer, ``S`` the noise
matrix and ``z`` the next ``d`` normals of the trial's stream. Deterministic
kinds pass ``stochastic=False`` and consume no normals.
"""

import math

import numba as nb
import numpy as np

from .rng import normal_block


@nb.njit(inline="always", cache=True)
def step_into(x, a, c, s, drift_dt, noise_scale, z, stochastic, out):
    d = x.shape[0]
    for i in range(d):
        g = 0.0
        for j in range(d):
            g += a[i, j] * (x[j] - c[j])
        out[i] = x[i] - drift_dt * g
    if stochastic:
        for i in range(d):
            w = 0.0
            for j in range(d):
                w += s[i, j] * z[j]
            out[i] += noise_scale * w


@nb.njit(inline="always", cache=True)
def _draw(key0, key1, z, buf, state):
    # state[0]: next block index, state[1]: position inside buf
    for i in range(z.shape[0]):
        if state[1] == 4:
            normal_block(key0, key1, state[0], buf)
            state[0] += 1
            state[1] = 0
        z[i] = buf[state[1]]
        state[1] += 1


@nb.njit(inline="always", cache=True)
def _all_finite(x):
    for i in range(x.shape[0]):
        if not math.isfinite(x[i]):
            return False
    return True


@nb.njit(cache=True)
def simulate_path(x0, a, c, s, drift_dt, noise_scale, stochastic, key0, key1, out):
    """Fill ``out[k]`` with the state after ``k`` steps; return the first
    non-finite step index or -1."""
    d = x0.shape[0]
    z = np.zeros(d)
    buf = np.empty(4)
    state = np.zeros(2, dtype=np.int64)
    state[1] = 4
    out[0, :] = x0
    for k in range(1, out.shape[0]):
        if stochastic:
            _draw(key0, key1, z, buf, state)
        step_into(out[k - 1], a, c, s, drift_dt, noise_scale, z, stochastic, out[k])
        if not _all_finite(out[k]):
            return k
    return -1


@nb.njit(inline="always", cache=True)
def _one_exit(x0, a, c, s, drift_dt, noise_scale, stochastic, r2, max_steps, key0, key1, point):
    d = x0.shape[0]
    x = x0.copy()
    y = np.empty(d)
    z = np.zeros(d)
    buf = np.empty(4)
    state = np.zeros(2, dtype=np.int64)
    state[1] = 4
    n2 = 0.0
    for i in range(d):
        n2 += (x[i] - c[i]) ** 2
    if n2 > r2:
        point[:] = x
        return 1, 0
    for k in range(1, max_steps + 1):
        if stochastic:
            _draw(key0, key1, z, buf, state)
        step_into(x, a, c, s, drift_dt, noise_scale, z, stochastic, y)
        n2 = 0.0
        for i in range(d):
            x[i] = y[i]
            n2 += (y[i] - c[i]) ** 2
        if not math.isfinite(n2):
            point[:] = x
            return -1, k
        if n2 > r2:
            point[:] = x
            return 1, k
    point[:] = x
    return 0, max_steps


@nb.njit(parallel=True, cache=True)
def exit_trials(x0, a, c, s, drift_dt, noise_scale, stochastic, r2, max_steps, key0, first_stream,
                status, steps, points):
    """Run ``status.shape[0]`` independent first-exit trials.

    Trial ``i`` uses stream ``(key0, first_stream + i)``. ``status`` is 1 for
    exit, 0 for censored, -1 for a non-finite state.
    """
    n = status.shape[0]
    for i in nb.prange(n):
        st, k = _one_exit(x0, a, c, s, drift_dt, noise_scale, stochastic, r2, max_steps,
                          key0, first_stream + np.uint64(i), points[i])
        status[i] = st
        steps[i] = k


@nb.njit(inline="always", cache=True)
def _one_tube(x0, a, c, s, drift_dt, noise_scale, stochastic, ref, delta2, key0, key1):
    d = x0.shape[0]
    x = x0.copy()
    y = np.empty(d)
    z = np.zeros(d)
    buf = np.empty(4)
    state = np.zeros(2, dtype=np.int64)
    state[1] = 4
    for k in range(1, ref.shape[0]):
        if stochastic:
            _draw(key0, key1, z, buf, state)
        step_into(x, a, c, s, drift_dt, noise_scale, z, stochastic, y)
        dist2 = 0.0
        for i in range(d):
            x[i] = y[i]
            dist2 += (y[i] - ref[k, i]) ** 2
        if not (dist2 < delta2):
            return False
    return True


@nb.njit(parallel=True, cache=True)
def tube_trials(x0, a, c, s, drift_dt, noise_scale, stochastic, ref, delta2, key0, inside):
    for i in nb.prange(inside.shape[0]):
        inside[i] = _one_tube(x0, a, c, s, drift_dt, noise_scale, stochastic, ref, delta2,
                              key0, np.uint64(i))
