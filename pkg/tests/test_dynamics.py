import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdescape.dynamics import (
    DynamicsConfig,
    DynamicsKind,
    Path,
    SimState,
    sample_moments,
    simulate,
    step,
)
from sgdescape.errors import NumericalError
from sgdescape.landscape import Landscape, loss_eval
from sgdescape.rng import RngStream

H2 = Landscape.diagonal([2.0])


def test_discrete_step_examples():
    cfg = DynamicsConfig("discrete_sgd", eta=0.1, batch=1.0)
    s0 = SimState(np.array([1.0]))
    assert math.isclose(step(s0, cfg, H2, None, z=[0.0]).position[0], 0.8, rel_tol=1e-15)
    s1 = step(s0, cfg, H2, None, z=[1.0])
    assert math.isclose(s1.position[0], 0.8 + 0.1 * math.sqrt(2.0), rel_tol=1e-14)
    assert s1.step_count == 1 and math.isclose(s1.time, 0.1)


def test_gradient_flow_fixed_point_uses_no_randomness():
    cfg = DynamicsConfig("gradient_flow", eta=0.1)
    s = step(SimState(np.array([0.0])), cfg, H2, None)
    assert s.position[0] == 0.0


def test_step_consumes_stream_by_index():
    cfg = DynamicsConfig("proxy", eta=0.1, dt=0.01)
    ls = Landscape.diagonal([1.0, 3.0])
    rng = RngStream(5, 2)
    state = SimState(np.array([0.2, -0.1]))
    path = simulate(state.position, cfg, ls, 4, rng)
    for k in range(4):
        state = step(state, cfg, ls, rng)
        np.testing.assert_array_equal(state.position, path.points[k + 1])
    assert state.step_count == 4 and math.isclose(state.time, 4 * 0.01)


def test_simulate_gradient_flow_example():
    path = simulate([1.0], DynamicsConfig("gradient_flow", eta=0.1), H2, 2, None)
    np.testing.assert_allclose(path.points[:, 0], [1.0, 0.8, 0.64], rtol=1e-15)
    assert path.n_segments == 2 and math.isclose(path.horizon, 0.2)


@pytest.mark.parametrize("kind", ["discrete_sgd", "continuous_sgd", "proxy"])
def test_simulate_deterministic(kind):
    cfg = DynamicsConfig(kind, eta=0.05, batch=2.0, dt=0.01)
    ls = Landscape.diagonal([1.0, 0.3])
    a = simulate([0.1, 0.1], cfg, ls, 200, RngStream(9, 0))
    b = simulate([0.1, 0.1], cfg, ls, 200, RngStream(9, 0))
    assert a.points.tobytes() == b.points.tobytes()
    c = simulate([0.1, 0.1], cfg, ls, 200, RngStream(9, 1))
    assert not np.array_equal(a.points, c.points)


@given(eta=st.floats(0.001, 0.5), batch=st.floats(1.0, 64.0), seed=st.integers(0, 2**64 - 1))
@settings(max_examples=25, deadline=None)
def test_dt_eta_equivalence(eta, batch, seed):
    ls = Landscape(np.array([[1.5, 0.4], [0.4, 0.7]]), [0.3, -0.2])
    disc = simulate([0.5, 0.5], DynamicsConfig("discrete_sgd", eta, batch), ls, 50, RngStream(seed))
    cont = simulate([0.5, 0.5], DynamicsConfig("continuous_sgd", eta, batch, dt=eta), ls, 50, RngStream(seed))
    np.testing.assert_allclose(cont.points, disc.points, rtol=1e-12, atol=0)


def test_discrete_forces_dt():
    assert DynamicsConfig("discrete_sgd", eta=0.1, dt=0.5).dt == 0.1
    assert DynamicsConfig("continuous_sgd", eta=0.1).dt == 0.1
    assert DynamicsConfig("continuous_sgd", eta=0.1, dt=0.01).dt == 0.01


@pytest.mark.parametrize("kw", [dict(eta=0.0), dict(eta=-1.0), dict(eta=0.1, batch=0.5),
                                dict(eta=0.1, dt=0.0), dict(eta=math.inf)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DynamicsConfig("continuous_sgd", **kw)


def test_noise_std_closed_forms():
    # per-step std along a covariance eigendirection c
    c, eta, batch, dt = 2.0, 0.1, 4.0, 0.01
    d = DynamicsConfig("discrete_sgd", eta, batch)
    k = DynamicsConfig("continuous_sgd", eta, batch, dt=dt)
    assert math.isclose(d.noise_scale * math.sqrt(c), eta * math.sqrt(c / batch), rel_tol=1e-15)
    assert math.isclose(k.noise_scale * math.sqrt(c), math.sqrt(dt) * math.sqrt(eta / batch) * math.sqrt(c),
                        rel_tol=1e-15)
    assert DynamicsConfig("gradient_flow", eta).noise_scale == 0.0


def test_moments_gradient_flow_exact_zero():
    mean, cov = sample_moments(DynamicsConfig("gradient_flow", 0.1), H2, [1.0], 10, RngStream(0))
    assert np.all(cov == 0.0)
    assert math.isclose(mean[0], -0.2)


def test_moments_discrete_sgd():
    cfg = DynamicsConfig("discrete_sgd", eta=0.1, batch=2.0)
    mean, cov = sample_moments(cfg, H2, [1.0], 1_000_000, RngStream(1))
    assert abs(cov[0, 0] - 0.01) <= 0.01 * 0.01
    assert abs(mean[0] + 0.2) <= 3 * math.sqrt(0.01 / 1_000_000)


def test_moments_proxy():
    cfg = DynamicsConfig("proxy", eta=0.1, batch=1.0, dt=0.01)
    mean, cov = sample_moments(cfg, H2, [0.5], 1_000_000, RngStream(2))
    assert abs(cov[0, 0] - 0.001) <= 0.01 * 0.001
    assert abs(mean[0] + 0.01) <= 3 * math.sqrt(0.001 / 1_000_000)


def test_moments_2d_covariance():
    ls = Landscape(np.array([[1.5, 0.4], [0.4, 0.7]]), np.zeros(2))
    cfg = DynamicsConfig("discrete_sgd", eta=0.2, batch=3.0)
    n = 400_000
    _, cov = sample_moments(cfg, ls, [0.1, 0.2], n, RngStream(3))
    expect = 0.2**2 * ls.effective_hessian / 3.0
    # 3 sigma per entry: var(s_ij) = (S_ii S_jj + S_ij^2) / n
    se = np.sqrt((np.outer(np.diag(expect), np.diag(expect)) + expect**2) / n)
    assert np.all(np.abs(cov - expect) <= 3 * se)


@given(x0=st.floats(-2.0, 2.0), y0=st.floats(-2.0, 2.0), frac=st.floats(0.01, 0.99))
@settings(max_examples=30, deadline=None)
def test_gradient_flow_decreases_loss(x0, y0, frac):
    ls = Landscape(np.array([[3.0, 1.0], [1.0, 0.5]]), np.zeros(2))
    dt = frac * 2.0 / ls.eigenvalues[-1]
    p = simulate([x0, y0], DynamicsConfig("gradient_flow", eta=dt), ls, 30, None)
    losses = [loss_eval(ls, x) for x in p.points]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_non_finite_state_names_step():
    cfg = DynamicsConfig("gradient_flow", eta=10.0)
    with pytest.raises(NumericalError) as info:
        simulate([1.0], cfg, Landscape.diagonal([100.0]), 1000, None)
    assert info.value.step is not None and str(info.value.step) in str(info.value)


def test_stochastic_needs_stream():
    with pytest.raises(ValueError):
        simulate([0.0], DynamicsConfig("proxy", 0.1), H2, 3, None)


def test_path_validation_and_grid():
    p = Path(np.array([[0.0], [1.0], [4.0]]), 2.0)
    assert p.h == 1.0 and p.n_segments == 2
    np.testing.assert_array_equal(p.times, [0.0, 1.0, 2.0])
    np.testing.assert_allclose(p.node_velocities()[:, 0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        Path(np.array([[0.0]]), 1.0)
    with pytest.raises(ValueError):
        Path(np.array([[0.0], [math.nan]]), 1.0)
    with pytest.raises(ValueError):
        Path(np.zeros((3, 1)), 0.0)


def test_kind_enum_values():
    assert {k.value for k in DynamicsKind} == {"discrete_sgd", "continuous_sgd", "proxy", "gradient_flow"}
