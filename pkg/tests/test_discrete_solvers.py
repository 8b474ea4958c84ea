import warnings

import numpy as np
import pytest

from otbench import discrete_solvers as ds
from otbench import geometry


def uniform(n):
    return np.full(n, 1.0 / n)


def test_config_validation():
    with pytest.raises(ValueError):
        ds.SinkhornConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        ds.SinkhornConfig(epsilon=0.1, tolerance=0.0)
    with pytest.raises(ValueError):
        ds.SinkhornConfig(epsilon=0.1, max_iterations=0)


def test_brute_force_uniform_permutation_case():
    x = np.array([[0.0, 0.0], [2.0, 0.0]])
    y = np.array([[1.0, 1.0], [3.0, 1.0]])
    cost = geometry.cost_matrix(x, y)
    plan, value = ds.brute_force_ot(cost, uniform(2), uniform(2))
    assert value == pytest.approx(2.0)
    np.testing.assert_allclose(plan, [[0.5, 0.0], [0.0, 0.5]])


def test_brute_force_tie_prefers_first_permutation():
    cost = np.ones((2, 2))
    plan, value = ds.brute_force_ot(cost, uniform(2), uniform(2))
    assert value == pytest.approx(1.0)
    np.testing.assert_allclose(plan, [[0.5, 0.0], [0.0, 0.5]])


def test_brute_force_general_weights():
    cost = np.array([[0.0, 1.0], [1.0, 0.0]])
    a = np.array([0.7, 0.3])
    b = np.array([0.2, 0.8])
    plan, value = ds.brute_force_ot(cost, a, b)
    assert value == pytest.approx(0.5)
    np.testing.assert_allclose(plan, [[0.2, 0.5], [0.0, 0.3]], atol=1e-12)
    np.testing.assert_allclose(plan.sum(axis=1), a, atol=1e-12)
    np.testing.assert_allclose(plan.sum(axis=0), b, atol=1e-12)


def test_brute_force_rejects_large_instances():
    with pytest.raises(ValueError, match="too large"):
        ds.brute_force_ot(np.zeros((9, 9)), uniform(9), uniform(9))
    with pytest.raises(ValueError, match="too large"):
        ds.brute_force_ot(np.zeros((4, 4)), np.array([0.1, 0.2, 0.3, 0.4]),
                          uniform(4))


def test_weight_validation():
    cost = np.zeros((2, 2))
    cfg = ds.SinkhornConfig(epsilon=0.1)
    with pytest.raises(ValueError, match="strictly positive"):
        ds.sinkhorn_log(cost, np.array([1.0, 0.0]), uniform(2), cfg)
    with pytest.raises(ValueError, match="sum to 1"):
        ds.sinkhorn_log(cost, np.array([0.9, 0.9]), uniform(2), cfg)
    with pytest.raises(ValueError, match="lengths"):
        ds.sinkhorn_log(cost, uniform(3), uniform(2), cfg)
    with pytest.raises(ValueError, match="finite"):
        ds.sinkhorn_log(np.array([[np.inf, 0.0], [0.0, 0.0]]),
                        uniform(2), uniform(2), cfg)


def test_single_atom_plan_is_exact():
    sol = ds.sinkhorn_log(np.array([[3.0]]), np.array([1.0]), np.array([1.0]),
                          ds.SinkhornConfig(epsilon=0.5))
    assert sol.converged
    assert sol.plan[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert sol.marginal_error <= 1e-12
    assert sol.transport_cost == pytest.approx(3.0, rel=1e-12)


def test_sinkhorn_matches_brute_force_at_small_epsilon(rng):
    x = rng.uniform(-2, 2, size=(4, 2))
    y = rng.uniform(-2, 2, size=(4, 2))
    cost = geometry.cost_matrix(x, y)
    _, exact = ds.brute_force_ot(cost, uniform(4), uniform(4))
    sol = ds.sinkhorn_log(cost, uniform(4), uniform(4),
                          ds.SinkhornConfig(epsilon=0.005))
    assert sol.converged
    assert sol.transport_cost == pytest.approx(exact, rel=0.01)


def test_marginals_meet_tolerance(rng):
    cost = geometry.cost_matrix(rng.normal(size=(6, 2)), rng.normal(size=(5, 2)))
    a = rng.uniform(0.5, 1.5, size=6)
    a /= a.sum()
    b = rng.uniform(0.5, 1.5, size=5)
    b /= b.sum()
    cfg = ds.SinkhornConfig(epsilon=0.05, tolerance=1e-8)
    sol = ds.sinkhorn_log(cost, a, b, cfg)
    assert sol.converged
    err = (np.abs(sol.plan.sum(axis=1) - a).sum()
           + np.abs(sol.plan.sum(axis=0) - b).sum())
    assert err <= 1e-8
    assert sol.marginal_error <= 1e-8


def test_potential_gauge_is_mean_zero_u(rng):
    cost = geometry.cost_matrix(rng.normal(size=(5, 2)), rng.normal(size=(5, 2)))
    sol = ds.sinkhorn_log(cost, uniform(5), uniform(5),
                          ds.SinkhornConfig(epsilon=0.1))
    assert abs(sol.u_hat.mean()) <= 1e-12


def test_plan_consistent_with_potentials(rng):
    cost = geometry.cost_matrix(rng.normal(size=(5, 2)), rng.normal(size=(6, 2)))
    eps = 0.1
    sol = ds.sinkhorn_log(cost, uniform(5), uniform(6),
                          ds.SinkhornConfig(epsilon=eps))
    recon = np.exp((sol.u_hat[:, None] + sol.v_hat[None, :] - cost) / eps)
    recon = recon / (5 * 6)
    np.testing.assert_allclose(recon, sol.plan, rtol=1e-10, atol=1e-14)


def test_transport_cost_nonincreasing_as_epsilon_shrinks(rng):
    cost = geometry.cost_matrix(rng.uniform(-2, 2, size=(6, 2)),
                                rng.uniform(-2, 2, size=(6, 2)))
    costs = []
    for eps in (0.5, 0.1, 0.02):
        sol = ds.sinkhorn_log(cost, uniform(6), uniform(6),
                              ds.SinkhornConfig(epsilon=eps))
        costs.append(sol.transport_cost)
    assert costs[0] >= costs[1] - 1e-4
    assert costs[1] >= costs[2] - 1e-4


def test_warm_start_skips_iterations(rng):
    cost = geometry.cost_matrix(rng.uniform(-2, 2, size=(8, 2)),
                                rng.uniform(-2, 2, size=(8, 2)))
    cold = ds.sinkhorn_log(cost, uniform(8), uniform(8),
                           ds.SinkhornConfig(epsilon=0.02))
    warm = ds.sinkhorn_log(cost, uniform(8), uniform(8),
                           ds.SinkhornConfig(epsilon=0.02,
                                             warm_start=(cold.u_hat, cold.v_hat)))
    assert warm.converged
    assert warm.iterations_used < cold.iterations_used
    assert warm.iterations_used <= 5


def test_warm_start_length_mismatch_raises():
    cfg = ds.SinkhornConfig(epsilon=0.1, warm_start=(np.zeros(3), np.zeros(2)))
    with pytest.raises(ValueError, match="warm start"):
        ds.sinkhorn_log(np.zeros((2, 2)), uniform(2), uniform(2), cfg)


def test_small_epsilon_emits_warning():
    with pytest.warns(RuntimeWarning, match="epsilon"):
        ds.sinkhorn_log(np.zeros((2, 2)), uniform(2), uniform(2),
                        ds.SinkhornConfig(epsilon=0.001))


def test_no_warning_at_threshold():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ds.sinkhorn_log(np.zeros((2, 2)), uniform(2), uniform(2),
                        ds.SinkhornConfig(epsilon=0.005))


def test_barycentric_map_known_values():
    plan = np.array([[0.5, 0.0], [0.0, 0.5]])
    a = np.array([0.5, 0.5])
    y = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(ds.barycentric_map(plan, a, y), y)


def test_barycentric_map_mixes_targets():
    plan = np.array([[0.25, 0.25]])
    y = np.array([[0.0, 0.0], [2.0, 4.0]])
    np.testing.assert_allclose(ds.barycentric_map(plan, np.array([0.5]), y),
                               [[1.0, 2.0]])


def test_barycentric_map_validation():
    with pytest.raises(ValueError, match="positive"):
        ds.barycentric_map(np.ones((1, 1)), np.array([0.0]), np.zeros((1, 2)))
    with pytest.raises(ValueError, match="empty row"):
        ds.barycentric_map(np.zeros((1, 1)), np.array([1.0]), np.zeros((1, 2)))
