import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigidfsi.kinematics import (orthogonality_defect, rigid_velocity, rotation_exp, skew,
                                 to_body_frame, update_rotation)

vec3 = st.lists(st.floats(-10, 10), min_size=3, max_size=3)


def rk4_rotation(Q0, omega_of_t, T, n):
    """Dense RK4 integration of dQ/dt = -Q skew(omega(t))."""
    Q = np.array(Q0, float)
    dt = T / n
    f = lambda t, Q: -Q @ skew(omega_of_t(t))
    for k in range(n):
        t = k * dt
        k1 = f(t, Q)
        k2 = f(t + dt / 2, Q + dt / 2 * k1)
        k3 = f(t + dt / 2, Q + dt / 2 * k2)
        k4 = f(t + dt, Q + dt * k3)
        Q = Q + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Q


def test_skew_examples():
    np.testing.assert_array_equal(skew([0, 0, 0]), np.zeros((3, 3)))
    np.testing.assert_array_equal(skew([0, 0, 1]) @ [1, 0, 0], [0, -1, 0])
    np.testing.assert_array_equal(np.cross([1, 0, 0], [0, 0, 1]), [0, -1, 0])


@given(vec3, vec3)
def test_skew_is_cross_and_antisymmetric(w, x):
    S = skew(w)
    np.testing.assert_array_equal(S + S.T, np.zeros((3, 3)))
    np.testing.assert_allclose(S @ x, np.cross(x, w), atol=1e-12)


def test_update_rotation_zero_omega():
    Q = rotation_exp([0.3, -0.2, 0.5], 1.0)
    np.testing.assert_array_equal(update_rotation(Q, [0, 0, 0], 0.7), Q)


def test_quarter_turn_against_dense_rk4():
    w = np.array([0, 0, np.pi / 2])
    Q = update_rotation(np.eye(3), w, 1.0)
    ref = rk4_rotation(np.eye(3), lambda t: w, 1.0, 2000)
    np.testing.assert_allclose(Q, ref, atol=1e-8)
    # closed form: exp(-skew(w)) for a quarter turn about z
    np.testing.assert_allclose(Q, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_small_angle_branch_continuous():
    w = np.array([1e-9, 2e-9, -1e-9])
    a = rotation_exp(w, 1.0)
    b = rotation_exp(w * 1e3, 1e-3)
    np.testing.assert_allclose(a, b, atol=1e-15)
    assert orthogonality_defect(a)[0] < 1e-15


def test_ten_thousand_random_steps_stay_orthogonal():
    rng = np.random.default_rng(7)
    Q = np.eye(3)
    for _ in range(10_000):
        Q = update_rotation(Q, rng.normal(scale=3.0, size=3), rng.uniform(1e-3, 0.1))
    frob, det = orthogonality_defect(Q)
    assert frob <= 1e-12 and det <= 1e-12


def test_piecewise_constant_composition_first_order():
    omega = lambda t: np.array([np.sin(t), 0.5 * np.cos(2 * t), 0.3 + 0.1 * t])
    T = 2.0
    ref = rk4_rotation(np.eye(3), omega, T, 4000)
    errs = []
    for n in (50, 100, 200, 400):
        Q = np.eye(3)
        dt = T / n
        for k in range(n):
            Q = update_rotation(Q, omega(k * dt), dt)
        errs.append(np.linalg.norm(Q - ref))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)
    assert np.mean(orders) >= 1.0 - 0.05


def test_to_body_frame_examples():
    np.testing.assert_array_equal(to_body_frame([1, 2, 3], np.eye(3)), [1, 2, 3])
    Qz = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    v = to_body_frame([1, 0, 0], Qz)
    np.testing.assert_allclose(v, [0, -1, 0])
    assert np.linalg.norm(v) == pytest.approx(1.0)
    np.testing.assert_array_equal(to_body_frame([0, 0, 0], Qz), [0, 0, 0])


@settings(max_examples=50)
@given(st.lists(vec3, min_size=1, max_size=20), vec3)
def test_frame_transform_preserves_norm(omegas, w):
    Q = np.eye(3)
    for om in omegas:
        Q = update_rotation(Q, om, 0.1)
    assert np.linalg.norm(to_body_frame(w, Q)) == pytest.approx(np.linalg.norm(w), rel=1e-14,
                                                                 abs=1e-14)


def test_rigid_velocity_examples():
    np.testing.assert_array_equal(rigid_velocity([0, 0, 0], [0, 0, 0], [1, 2, 3]), [0, 0, 0])
    np.testing.assert_array_equal(rigid_velocity([1, 0, 0], [0, 0, 0], [4, -2, 9]), [1, 0, 0])
    np.testing.assert_array_equal(rigid_velocity([0, 0, 0], [0, 0, 1], [1, 0, 0]), [0, 1, 0])
