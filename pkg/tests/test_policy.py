import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cheshire.errors import ConfigError, SolverDivergenceError
from cheshire.hawkes import IntensityVector, NetworkModel
from cheshire.policy import (
    ControlConfig,
    FeedbackPolicy,
    build_policy,
    load_policy,
    optimal_intensity,
    save_policy,
    solve_g,
    solve_riccati,
    zero_policy,
)

from oracles import riccati_hamiltonian, scalar_euler_richardson


def scalar(a, omega, mu=0.0):
    return NetworkModel([[a]], [mu], omega)


def h_error(model, q, s, f, horizon, steps):
    config = ControlConfig(0.0, horizon, q, s, f, steps)
    _, H = solve_riccati(model, config)
    return np.abs(H[0] - riccati_hamiltonian(model.A, model.omega, q, s, f, horizon)).max()


def test_zero_weights_give_zero_solution():
    model = NetworkModel([[0.0, 1.0], [0.5, 0.0]], [1.0, 1.0], 2.0)
    config = ControlConfig.uniform(2, 0.0, 1.0, q=0.0, s=1.0, f=0.0, grid_steps=10)
    grid, H = solve_riccati(model, config)
    assert not H.any()
    assert not solve_g(model, config, grid, H).any()
    policy = build_policy(model, config)
    assert policy.is_zero
    assert not optimal_intensity(policy, IntensityVector([5.0, 3.0], 0.5)).any()


def test_linear_scalar_case_is_exponential():
    config = ControlConfig(0.0, 1.0, [0.0], [1.0], [1.0], 2000)
    _, H = solve_riccati(scalar(0.0, 1.0), config)
    assert H[0, 0, 0] == pytest.approx(-math.exp(-2.0), abs=1e-6)
    assert H[-1, 0, 0] == -1.0


def test_tangent_case_against_closed_form():
    # a = omega = s = q = 1, f = 0: dH/dt = H^2 + 1 backwards from 0 gives H = -tan(tf - t)
    config = ControlConfig(0.0, 1.0, [1.0], [1.0], [0.0], 2000)
    grid, H = solve_riccati(scalar(1.0, 1.0), config)
    np.testing.assert_allclose(H[:, 0, 0], -np.tan(1.0 - grid), rtol=0, atol=1e-10)


def test_scalar_riccati_matches_euler_oracle():
    H_ref, _ = scalar_euler_richardson(1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0)
    config = ControlConfig(0.0, 1.0, [1.0], [1.0], [0.0], 2000)
    _, H = solve_riccati(scalar(1.0, 1.0), config)
    assert H[0, 0, 0] == pytest.approx(H_ref, abs=1e-6)


@pytest.mark.parametrize(
    "a, omega, q, s, f, steps",
    [(0.0, 1.0, 0.0, 1.0, 1.0, 20), (0.3, 2.0, 1.0, 2.0, 1.0, 20), (1.0, 1.0, 1.0, 1.0, 0.0, 160)],
)
def test_scalar_fourth_order(a, omega, q, s, f, steps):
    model = scalar(a, omega)
    ratio = h_error(model, [q], [s], [f], 1.0, steps) / h_error(model, [q], [s], [f], 1.0, 2 * steps)
    assert 12.0 <= ratio <= 20.0


def test_matrix_fourth_order():
    rng = np.random.default_rng(0)
    model = NetworkModel(rng.uniform(0, 0.5, (4, 4)), rng.uniform(0, 1, 4), 2.0)
    q, s, f = rng.uniform(0.5, 1, 4), rng.uniform(2, 4, 4), rng.uniform(0, 1, 4)
    ratio = h_error(model, q, s, f, 1.0, 20) / h_error(model, q, s, f, 1.0, 40)
    assert 12.0 <= ratio <= 20.0


@pytest.mark.parametrize("a, omega, mu, q, s, f", [(1.0, 1.0, 0.5, 1.0, 1.0, 0.0), (0.4, 3.0, 2.0, 0.5, 0.2, 1.0)])
def test_scalar_g_matches_euler_oracle(a, omega, mu, q, s, f):
    H_ref, g_ref = scalar_euler_richardson(a, omega, mu, q, s, f, 1.0)
    config = ControlConfig(0.0, 1.0, [q], [s], [f], 2000)
    grid, H = solve_riccati(scalar(a, omega, mu), config)
    g = solve_g(scalar(a, omega, mu), config, grid, H)
    assert H[0, 0, 0] == pytest.approx(H_ref, abs=1e-6)
    assert g[0, 0] == pytest.approx(g_ref, abs=1e-6)
    assert g[-1, 0] == 0.0


def test_g_vanishes_without_forcing():
    model = NetworkModel(np.zeros((2, 2)), [0.0, 0.0], 1.0)
    config = ControlConfig.uniform(2, 0.0, 1.0, q=1.0, s=1.0, f=1.0, grid_steps=20)
    grid, H = solve_riccati(model, config)
    assert H.any()
    assert not solve_g(model, config, grid, H).any()


def test_g_grid_mismatch():
    model = scalar(0.5, 1.0, 1.0)
    config = ControlConfig(0.0, 1.0, [1.0], [1.0], [0.0], 20)
    grid, H = solve_riccati(model, config)
    with pytest.raises(ConfigError):
        solve_g(model, ControlConfig(0.0, 1.0, [1.0], [1.0], [0.0], 40), grid, H)
    with pytest.raises(ConfigError):
        solve_g(model, ControlConfig(0.0, 2.0, [1.0], [1.0], [0.0], 20), grid, H)


def test_finite_escape_raises_with_time():
    # a = omega = s = q = 1 blows up at time-to-go pi/2
    config = ControlConfig(0.0, 3.0, [1.0], [1.0], [0.0], 3000)
    with pytest.raises(SolverDivergenceError) as info:
        solve_riccati(scalar(1.0, 1.0), config)
    assert 3.0 - info.value.time == pytest.approx(math.pi / 2, abs=0.05)


def test_control_zero_without_influence():
    model = NetworkModel(np.zeros((3, 3)), [1.0, 2.0, 0.5], 1.0)
    policy = build_policy(model, ControlConfig.uniform(3, 0.0, 1.0, 1.0, 1.0, 1.0, 50))
    assert not optimal_intensity(policy, IntensityVector([4.0, 1.0, 0.0], 0.3), clamp=False).any()


def test_scalar_control_hand_formula():
    a, omega, mu, q, s = 1.0, 1.0, 0.5, 1.0, 1.0
    H_ref, g_ref = scalar_euler_richardson(a, omega, mu, q, s, 0.0, 1.0)
    model = scalar(a, omega, mu)
    policy = build_policy(model, ControlConfig(0.0, 1.0, [q], [s], [0.0], 2000))
    lam = 2.3
    expected = -(a * g_ref + a * H_ref * lam + 0.5 * a * a * H_ref) / s
    got = optimal_intensity(policy, IntensityVector([lam], 0.0), clamp=False)[0]
    assert got == pytest.approx(expected, abs=1e-6)
    # at an off-grid time the law uses interpolated H and g
    t = 0.123456
    k, w = policy.locate(t)
    Ht = (1 - w) * policy.H[k, 0, 0] + w * policy.H[k + 1, 0, 0]
    gt = (1 - w) * policy.g[k, 0] + w * policy.g[k + 1, 0]
    expected = -(a * gt + a * Ht * lam + 0.5 * a * a * Ht) / s
    assert optimal_intensity(policy, IntensityVector([lam], t), clamp=False)[0] == pytest.approx(expected, abs=1e-12)


def test_policy_domain():
    policy = build_policy(scalar(0.5, 1.0, 1.0), ControlConfig(0.0, 1.0, [1.0], [1.0], [0.0], 10))
    with pytest.raises(ConfigError):
        policy.locate(1.5)
    with pytest.raises(ConfigError):
        optimal_intensity(policy, IntensityVector([1.0], -0.1))


def test_nonpositive_solution_and_nonnegative_base(small_model):
    config = ControlConfig.uniform(3, 0.0, 2.0, q=1.0, s=5.0, f=1.0, grid_steps=400)
    policy = build_policy(small_model, config)
    assert policy.H.max() <= 1e-12
    assert policy.g.max() <= 1e-12
    assert policy.base_u.min() >= -1e-12


def test_bound_terms_dominate(small_model):
    config = ControlConfig.uniform(3, 0.0, 2.0, q=1.0, s=5.0, f=1.0, grid_steps=200)
    policy = build_policy(small_model, config)
    x = np.array([1.0, 2.0, 0.5])
    for t in np.linspace(0.0, 2.0, 37):
        base_pos, colsum = policy.bound_terms(t)
        for r in np.linspace(t, 2.0, 9):
            u = np.clip(policy.control(r, x), 0.0, None)
            assert u.sum() <= base_pos + colsum @ x + 1e-12


def test_config_validation_and_round_trip():
    with pytest.raises(ConfigError):
        ControlConfig.uniform(2, 0.0, 1.0, s=0.0)
    with pytest.raises(ConfigError):
        ControlConfig.uniform(2, 1.0, 1.0)
    with pytest.raises(ConfigError):
        ControlConfig(0.0, 1.0, [1.0, 1.0], [1.0, 1.0, 1.0], [0.0, 0.0])
    config = ControlConfig.uniform(2, 0.0, 1.0, q=[1.0, 2.0], s=3.0, f=0.5, grid_steps=10)
    back = ControlConfig.from_dict(config.to_dict())
    np.testing.assert_array_equal(back.q, config.q)
    np.testing.assert_array_equal(config.scaled(2.0).s, [6.0, 6.0])


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_policy_file_round_trip(tmp_path, small_model, suffix):
    policy = build_policy(small_model, ControlConfig.uniform(3, 0.0, 1.0, 1.0, 2.0, 0.5, 30))
    path = tmp_path / f"policy{suffix}"
    save_policy(policy, path)
    back = load_policy(path)
    assert isinstance(back, FeedbackPolicy)
    np.testing.assert_array_equal(back.H, policy.H)
    np.testing.assert_array_equal(back.g, policy.g)
    np.testing.assert_array_equal(back.model.A, policy.model.A)
    lam = IntensityVector([1.0, 2.0, 3.0], 0.4)
    np.testing.assert_array_equal(optimal_intensity(back, lam), optimal_intensity(policy, lam))


def test_zero_policy_is_zero(small_model):
    policy = zero_policy(small_model, 0.0, 3.0)
    assert policy.is_zero and policy.tf == 3.0


@given(
    seed=st.integers(0, 10_000),
    n=st.integers(1, 5),
)
def test_riccati_solution_stays_symmetric(seed, n):
    rng = np.random.default_rng(seed)
    model = NetworkModel(rng.uniform(0, 0.3, (n, n)), rng.uniform(0, 1, n), float(rng.uniform(1, 3)))
    config = ControlConfig(0.0, 1.0, rng.uniform(0, 1, n), rng.uniform(1, 3, n), rng.uniform(0, 1, n), 50)
    _, H = solve_riccati(model, config)
    assert np.abs(H - np.swapaxes(H, 1, 2)).max() < 1e-9
