import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralfc.rotations import (
    quat_conjugate,
    quat_exp,
    quat_from_axis_angle,
    quat_from_euler,
    quat_multiply,
    quat_to_euler,
    quat_to_rotmat,
    rotmat_to_quat,
)

angles = st.floats(-3.0, 3.0)


def test_yaw_90_matrix():
    r = quat_to_rotmat(quat_from_euler(0.0, 0.0, np.pi / 2))
    np.testing.assert_allclose(r, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


@given(angles, st.floats(-1.5, 1.5), angles)
@settings(max_examples=200, deadline=None)
def test_euler_round_trip(roll, pitch, yaw):
    q = quat_from_euler(roll, pitch, yaw)
    np.testing.assert_allclose(quat_to_euler(q), [roll, pitch, yaw], atol=1e-9)


@given(angles, angles, angles)
@settings(max_examples=200, deadline=None)
def test_rotmat_round_trip(a, b, c):
    q = quat_from_euler(a, b, c)
    q2 = rotmat_to_quat(quat_to_rotmat(q))
    assert min(np.abs(q - q2).max(), np.abs(q + q2).max()) < 1e-12
    np.testing.assert_allclose(quat_to_rotmat(q) @ quat_to_rotmat(q).T, np.eye(3), atol=1e-12)


def test_multiply_matches_matrix_product():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, q = rng.normal(size=(2, 4))
        p /= np.linalg.norm(p)
        q /= np.linalg.norm(q)
        np.testing.assert_allclose(quat_to_rotmat(quat_multiply(p, q)), quat_to_rotmat(p) @ quat_to_rotmat(q),
                                   atol=1e-12)
        np.testing.assert_allclose(quat_multiply(q, quat_conjugate(q)), [1, 0, 0, 0], atol=1e-12)


def test_exp_matches_axis_angle():
    v = np.array([0.3, -0.2, 0.5])
    angle = np.linalg.norm(v)
    np.testing.assert_allclose(quat_exp(v), quat_from_axis_angle(v / angle, angle), atol=1e-15)
    np.testing.assert_allclose(quat_exp(np.zeros(3)), [1, 0, 0, 0])
    np.testing.assert_allclose(quat_exp(np.array([1e-12, 0, 0])), [1, 5e-13, 0, 0], atol=1e-20)
