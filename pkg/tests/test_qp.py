import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import box_projected_gradient, brute_force_qp, dual_projected_gradient, random_pd
from pushmpc.qp import INFEASIBLE, MAX_ITERS, OPTIMAL, QpProblem, kkt_residuals, solve_qp


def scalar(upper=None):
    return QpProblem([[1.0]], [-1.0], upper=None if upper is None else [upper])


def box_problem(rng, n):
    p = random_pd(rng, n)
    q = rng.normal(size=n) * 5
    lo = -rng.uniform(0.1, 1.0, n)
    hi = rng.uniform(0.1, 1.0, n)
    return QpProblem(p, q, lower=lo, upper=hi)


def ineq_problem(rng, n, m):
    p = random_pd(rng, n)
    q = rng.normal(size=n) * 3
    g = rng.normal(size=(m, n))
    h = rng.uniform(-0.5, 1.0, m)
    return QpProblem(p, q, g, h)


def test_unconstrained_scalar():
    sol = solve_qp(scalar())
    assert sol.status == OPTIMAL
    assert sol.z_star[0] == pytest.approx(1.0, abs=1e-10)
    assert sol.objective == pytest.approx(-0.5, abs=1e-10)


def test_active_bound_scalar():
    sol = solve_qp(scalar(0.5))
    assert sol.status == OPTIMAL
    assert sol.z_star[0] == pytest.approx(0.5, abs=1e-10)
    assert max(kkt_residuals(scalar(0.5), sol.z_star, sol.duals)) <= 1e-10


def test_six_dim_against_dual_oracle():
    rng = np.random.default_rng(0)
    prob = ineq_problem(rng, 6, 6)
    z_ref, _ = dual_projected_gradient(prob.p_matrix, prob.q_vec, prob.g_matrix, prob.h_vec)
    sol = solve_qp(prob)
    assert sol.status == OPTIMAL
    assert np.linalg.norm(sol.z_star - z_ref) <= 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_box_against_primal_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    prob = box_problem(rng, int(rng.integers(6, 40)))
    z_ref = box_projected_gradient(prob.p_matrix, prob.q_vec, prob.lower, prob.upper)
    sol = solve_qp(prob)
    assert sol.status == OPTIMAL
    assert np.linalg.norm(sol.z_star - z_ref) <= 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_tiny_against_enumeration(seed):
    rng = np.random.default_rng(200 + seed)
    prob = ineq_problem(rng, 3, 5)
    z_ref = brute_force_qp(prob.p_matrix, prob.q_vec, prob.g_matrix, prob.h_vec)
    sol = solve_qp(prob)
    if z_ref is None:
        assert sol.status == INFEASIBLE
    else:
        assert sol.status == OPTIMAL
        np.testing.assert_allclose(sol.z_star, z_ref, atol=1e-8)


def test_kkt_residual_of_perturbed_point():
    prob = scalar(0.5)
    sol = solve_qp(prob)
    for dz in (0.1, -0.1):
        res = kkt_residuals(prob, sol.z_star + dz, sol.duals)
        assert max(res[0], res[1]) >= 0.05


def test_kkt_residual_feasible_non_optimal():
    prob = scalar(0.5)
    stat, prim, comp = kkt_residuals(prob, np.array([0.0]), np.zeros(2))
    assert stat > 0
    assert prim == 0.0


def test_psd_singular_problem():
    # linear objective along one axis, bounded only by the box
    prob = QpProblem(np.diag([1.0, 0.0]), [0.0, -1.0], lower=[-1, -1], upper=[1, 2])
    sol = solve_qp(prob)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z_star, [0.0, 2.0], atol=1e-8)


def test_infeasible_reported():
    prob = QpProblem(np.eye(2), np.zeros(2), [[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0])
    sol = solve_qp(prob)
    assert sol.status == INFEASIBLE
    assert np.all(np.isfinite(sol.z_star))


def test_infeasible_keeps_bounds():
    prob = QpProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [-5.0], lower=[-1, -1], upper=[1, 1])
    sol = solve_qp(prob)
    assert sol.status == INFEASIBLE
    assert np.all(sol.z_star >= -1 - 1e-9) and np.all(sol.z_star <= 1 + 1e-9)


def test_iteration_limit_returns_feasible_point():
    rng = np.random.default_rng(7)
    prob = ineq_problem(rng, 30, 15)
    sol = solve_qp(prob, max_iters=1)
    assert sol.status in (OPTIMAL, MAX_ITERS)
    assert np.all(prob.g_matrix @ sol.z_star <= prob.h_vec + 1e-6)


def test_deterministic():
    rng = np.random.default_rng(8)
    prob = ineq_problem(rng, 20, 10)
    a, b = solve_qp(prob), solve_qp(prob)
    np.testing.assert_array_equal(a.z_star, b.z_star)
    assert a.iterations == b.iterations


def test_warm_start_never_slower():
    rng = np.random.default_rng(11)
    for _ in range(5):
        prob = ineq_problem(rng, 25, 12)
        cold = solve_qp(prob)
        warm = solve_qp(prob, warm_start=cold.z_star)
        assert warm.iterations <= cold.iterations
        np.testing.assert_allclose(warm.z_star, cold.z_star, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_scaling_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    prob = ineq_problem(rng, 8, 4)
    scaled = QpProblem(alpha * prob.p_matrix, alpha * prob.q_vec, prob.g_matrix, prob.h_vec)
    a, b = solve_qp(prob), solve_qp(scaled)
    assert a.status == b.status
    if a.status == OPTIMAL:
        assert np.abs(a.z_star - b.z_star).max() <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_solution_always_feasible(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 15))
    prob = ineq_problem(rng, n, int(rng.integers(1, n + 1)))
    prob = QpProblem(prob.p_matrix, prob.q_vec, prob.g_matrix, np.abs(prob.h_vec),
                     lower=-rng.uniform(0.5, 2, n), upper=rng.uniform(0.5, 2, n))
    sol = solve_qp(prob)
    assert sol.status == OPTIMAL  # z = 0 is feasible
    assert np.all(prob.g_matrix @ sol.z_star <= prob.h_vec + 1e-6)
    assert np.all(sol.z_star >= prob.lower - 1e-6) and np.all(sol.z_star <= prob.upper + 1e-6)
    assert max(sol.kkt_residuals) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_optimum_beats_feasible_samples(seed):
    # the interior-point method has no monotone objective; check optimality directly
    rng = np.random.default_rng(seed)
    prob = box_problem(rng, 6)
    sol = solve_qp(prob)
    samples = rng.uniform(prob.lower, prob.upper, size=(200, 6))
    vals = [prob.objective(z) for z in samples]
    assert sol.objective <= min(vals) + 1e-12


def test_problem_validation():
    with pytest.raises(ValueError):
        QpProblem(np.array([[1.0, 0.0], [0.0, -1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), np.zeros(2), lower=[1, 1], upper=[0, 0])
    prob = QpProblem(np.array([[1.0, 2.0], [0.0, 5.0]]), np.zeros(2))
    np.testing.assert_array_equal(prob.p_matrix, prob.p_matrix.T)


def test_duals_ordering_and_sign():
    prob = QpProblem([[1.0]], [-1.0], [[1.0]], [0.25], lower=[-1.0], upper=[0.5])
    sol = solve_qp(prob)
    assert sol.duals.shape == (3,)
    assert sol.duals[0] == pytest.approx(0.75, abs=1e-9)
    assert np.all(sol.duals >= 0)
