import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralfc.observation import OBS_DIM, build_observation, up_alignment
from neuralfc.rotations import quat_from_axis_angle, quat_from_euler, quat_multiply, quat_to_rotmat


def test_identity_at_setpoint():
    obs = build_observation(np.zeros(3), np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(obs, [0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0])


def test_below_setpoint():
    obs = build_observation(np.zeros(3), np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(3), np.array([0, 0, -1.0]))
    np.testing.assert_array_equal(obs[:3], [0, 0, -1])
    np.testing.assert_array_equal(obs[9:], 0)


def test_yaw_90_columns():
    obs = build_observation(np.zeros(3), np.zeros(3), quat_from_euler(0, 0, np.pi / 2), np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(obs[3:9], [0, 1, 0, -1, 0, 0], atol=1e-15)


def test_error_clamp_and_dtype():
    out = np.empty(OBS_DIM, dtype=np.float32)
    build_observation(np.array([100.0, -100, 3]), np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(3), np.zeros(3),
                      out=out)
    np.testing.assert_array_equal(out[:3], [-5, 5, -3])


def test_rotation_columns_match_matrix():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(20, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    obs = build_observation(np.zeros((20, 3)), np.zeros((20, 3)), q, np.zeros((20, 3)), np.zeros(3))
    r = quat_to_rotmat(q)
    np.testing.assert_allclose(obs[:, 3:6], r[:, :, 0], atol=1e-12)
    np.testing.assert_allclose(obs[:, 6:9], r[:, :, 1], atol=1e-12)
    np.testing.assert_allclose(up_alignment(q), r[:, 2, 2], atol=1e-12)


@given(st.floats(-np.pi, np.pi), st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_world_yaw_rotation_invariance(phi, seed):
    rng = np.random.default_rng(seed)
    pos, vel, sp, rates = rng.normal(size=(4, 3))
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    rz = quat_to_rotmat(quat_from_axis_angle([0, 0, 1], phi))
    qz = quat_from_axis_angle([0, 0, 1], phi)
    a = build_observation(pos, vel, q, rates, sp)
    b = build_observation(rz @ pos, rz @ vel, quat_multiply(qz, q), rates, rz @ sp)
    assert abs(np.linalg.norm(a[0:3]) - np.linalg.norm(b[0:3])) < 1e-12
    assert abs(np.linalg.norm(a[9:12]) - np.linalg.norm(b[9:12])) < 1e-12
    np.testing.assert_allclose(a[12:15], b[12:15])
    # tilt (z components of the columns) is yaw-invariant as well
    np.testing.assert_allclose(a[[5, 8]], b[[5, 8]], atol=1e-12)
