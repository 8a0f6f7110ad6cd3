import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from oracles import central_diff
from pushmpc.ltv import B_U, discretize, jacobian_A, jacobian_Bv, linearize_along
from pushmpc.robot import ReferenceSample, error_dynamics_rhs, predict_nominal, rk4_step


def rel_err(a, b):
    return np.abs(a - b).max() / max(1.0, np.abs(b).max())


def test_origin_jacobian_structure():
    a = jacobian_A(np.zeros(5), ReferenceSample(v_rd=1.0))
    expected = np.zeros((5, 5))
    expected[0, 3] = expected[1, 2] = expected[2, 4] = 1.0
    np.testing.assert_array_equal(a, expected)


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_acceleration_rows_vanish(e, v):
    a = jacobian_A(e, np.array(v))
    assert np.all(a[3:] == 0)
    assert np.all(jacobian_Bv(e)[2] == 0)


def test_jacobians_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        e = rng.uniform(-1, 1, 5) * [0.5, 0.5, np.pi, 0.3, 0.5]
        v = rng.uniform(-1, 1, 4)
        u = rng.uniform(-0.3, 0.3, 2)
        fd_a = central_diff(lambda x: error_dynamics_rhs(x, v, u), e)
        fd_b = central_diff(lambda x: error_dynamics_rhs(e, x, u), v)
        worst = max(worst, rel_err(jacobian_A(e, v), fd_a), rel_err(jacobian_Bv(e), fd_b))
    assert worst <= 1e-6


def test_bv_at_origin():
    b = jacobian_Bv(np.zeros(5))
    assert b[0, 0] == 0.0
    assert b[3, 2] == -1.0
    assert b[4, 3] == -1.0


def test_discretize_zero_matrix():
    m = discretize(np.zeros((5, 5)), B_U, np.zeros((5, 4)), 0.1)
    np.testing.assert_array_equal(m.a_d, np.eye(5))
    np.testing.assert_allclose(m.b_u, 0.1 * B_U, atol=1e-16)


def test_discretize_diagonal():
    lam = np.array([-1.0, 0.5, 2.0, -0.3, 0.1])
    ts = 0.1
    m = discretize(np.diag(lam), np.eye(5)[:, :2], np.eye(5)[:, :4], ts)
    np.testing.assert_allclose(m.a_d, np.diag(np.exp(lam * ts)), rtol=1e-13)
    integral = (np.exp(lam * ts) - 1) / lam
    np.testing.assert_allclose(np.diag(m.b_u[:2, :2]), integral[:2], rtol=1e-12)
    np.testing.assert_allclose(np.diag(m.b_v[:4, :4]), integral[:4], rtol=1e-12)


def test_discretize_nilpotent_series():
    a = jacobian_A(np.zeros(5), ReferenceSample(v_rd=1.0))
    ts = 0.1
    assert np.all(np.linalg.matrix_power(a, 3) == 0)
    m = discretize(a, B_U, jacobian_Bv(np.zeros(5)), ts)
    series = np.eye(5) + a * ts + a @ a * ts**2 / 2
    assert np.abs(m.a_d - series).max() <= 1e-12
    integral = np.eye(5) * ts + a * ts**2 / 2 + a @ a * ts**3 / 6
    assert np.abs(m.b_u - integral @ B_U).max() <= 1e-12


@settings(max_examples=25)
@given(st.lists(st.floats(-1, 1), min_size=5, max_size=5), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_semigroup(e, v):
    a = jacobian_A(e, np.array(v))
    one = discretize(a, B_U, jacobian_Bv(e), 0.1)
    two = discretize(a, B_U, jacobian_Bv(e), 0.2)
    assert np.abs(one.a_d @ one.a_d - two.a_d).max() <= 1e-10
    # input integral over two steps
    assert np.abs(one.a_d @ one.b_u + one.b_u - two.b_u).max() <= 1e-10


def test_small_step_consistency():
    rng = np.random.default_rng(2)
    e, v = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 4)
    a, bv = jacobian_A(e, v), jacobian_Bv(e)
    ts = 1e-4
    m = discretize(a, B_U, bv, ts)
    assert rel_err((m.a_d - np.eye(5)) / ts, a) <= 1e-3
    assert rel_err(m.b_u / ts, B_U) <= 1e-3
    assert rel_err(m.b_v / ts, bv) <= 1e-3


def test_discretize_errors():
    with pytest.raises(ValueError):
        discretize(np.zeros((5, 5)), B_U, np.zeros((5, 4)), 0.0)
    bad = np.zeros((5, 5))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        discretize(bad, B_U, np.zeros((5, 4)), 0.1)


def test_a_d_invertible():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = discretize(jacobian_A(rng.normal(size=5), rng.normal(size=4)), B_U, np.zeros((5, 4)), 0.1)
        assert abs(np.linalg.det(m.a_d)) > 0
        # det(expm(A)) = exp(trace A) and A is traceless here
        assert np.linalg.det(m.a_d) == pytest.approx(np.exp(0.0), rel=1e-10)


def test_linearized_step_tracks_rk4():
    rng = np.random.default_rng(4)
    ts = 0.1
    worst = 0.0
    for _ in range(50):
        ref = ReferenceSample(0, 0, 0, rng.uniform(0, 0.3), rng.uniform(-0.3, 0.3), 0.0, 0.0)
        nom = rng.uniform(-1, 1, 5) * [0.2, 0.2, 0.3, 0.05, 0.1]
        u = rng.uniform(-0.3, 0.3, 2)
        nominal = predict_nominal(nom, [ref], [u], ts, 1)
        (model,) = linearize_along(nominal, [ref], [u], ts)
        np.testing.assert_allclose(model.step(nom, u, ref.disturbance), nominal[1], atol=1e-14)
        de = rng.uniform(-1e-3, 1e-3, 5)
        du = rng.uniform(-1e-3, 1e-3, 2)
        worst = max(worst, np.abs(model.step(nom + de, u + du, ref) - rk4_step(nom + de, ref, u + du, ts)).max())
    assert worst <= 1e-5


def test_models_carry_step_index():
    ref = ReferenceSample(v_rd=0.2)
    nominal = predict_nominal(np.zeros(5), [ref] * 3, [np.zeros(2)] * 3, 0.1, 3)
    models = linearize_along(nominal, [ref] * 3, [np.zeros(2)] * 3, 0.1, start=7)
    assert [m.valid_at for m in models] == [7, 8, 9]


def test_expm_agrees_with_scipy():
    rng = np.random.default_rng(9)
    a = jacobian_A(rng.normal(size=5), rng.normal(size=4))
    np.testing.assert_allclose(discretize(a, B_U, np.zeros((5, 4)), 0.1).a_d, expm(0.1 * a), rtol=1e-13)
