import numpy as np
import pytest

from neuralfc.cascade import (
    MIXER,
    CascadeController,
    CascadeGains,
    attitude_loop,
    mix,
    position_loop,
)
from neuralfc.dynamics import RigidBodyState, integrate, wrench_from_motors
from neuralfc.rotations import quat_from_euler, quat_to_euler


def test_position_loop_examples(gains):
    s = RigidBodyState.at_rest((0, 0, -1))
    np.testing.assert_array_equal(position_loop(s, (0, 0, -1), gains), 0)
    g = CascadeGains(pos_p=(1, 1, 1), max_vel=5.0)
    s0 = RigidBodyState.at_rest()
    np.testing.assert_allclose(position_loop(s0, (1, 0, 0), g), [1, 0, 0])
    np.testing.assert_allclose(position_loop(s0, (10, 0, 0), g), [5, 0, 0])


def test_velocity_loop_hover_equilibrium(gains):
    c = CascadeController(gains)
    s = RigidBodyState.at_rest(attitude=quat_from_euler(0, 0, 0.7))
    c.reset(s)
    thrust, q_sp = c.velocity_loop(s, np.zeros(3), 0.01)
    assert thrust == pytest.approx(gains.hover_throttle, rel=1e-12)
    np.testing.assert_allclose(quat_to_euler(q_sp), [0, 0, 0.7], atol=1e-12)


def test_forward_velocity_pitches_nose_down(gains):
    c = CascadeController(gains)
    _, q_sp = c.velocity_loop(RigidBodyState.at_rest(), np.array([1.0, 0, 0]), 0.01)
    roll, pitch, _ = quat_to_euler(q_sp)
    assert pitch < 0 and abs(roll) < 1e-12


def test_velocity_loop_memoryless_without_integrator(gains):
    g = CascadeGains(vel_i=(0, 0, 0), vel_d=(0, 0, 0), hover_throttle=gains.hover_throttle)
    c = CascadeController(g)
    s = RigidBodyState.at_rest()
    a = c.velocity_loop(s, np.array([0.5, -0.2, 0.1]), 0.01)
    b = c.velocity_loop(s, np.array([0.5, -0.2, 0.1]), 0.01)
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1], b[1])


def test_tilt_is_bounded(gains):
    c = CascadeController(gains)
    _, q_sp = c.velocity_loop(RigidBodyState.at_rest(), np.array([100.0, 100.0, 0]), 0.01)
    roll, pitch, _ = quat_to_euler(q_sp)
    up = np.cos(roll) * np.cos(pitch)
    assert np.arccos(up) <= gains.max_tilt + 1e-9


def test_attitude_loop_examples():
    g = CascadeGains(att_p=(2, 2, 2))
    s = RigidBodyState.at_rest()
    np.testing.assert_array_equal(attitude_loop(s, s.attitude, g), 0)
    q_sp = quat_from_euler(0, 0, np.pi / 2)
    np.testing.assert_allclose(attitude_loop(s, q_sp, g), [0, 0, 2 * np.sqrt(2) / 2 * 2], atol=1e-12)
    np.testing.assert_allclose(attitude_loop(s, -q_sp, g), attitude_loop(s, q_sp, g), atol=1e-15)


def test_rate_loop_examples(gains):
    c = CascadeController(gains)
    s = RigidBodyState.at_rest()
    np.testing.assert_array_equal(c.rate_loop(s, np.zeros(3), 0.01), 0)
    p_only = CascadeGains(rate_i=(0, 0, 0), rate_d=(0, 0, 0), hover_throttle=gains.hover_throttle)
    c = CascadeController(p_only)
    err = np.array([0.5, -1.0, 0.2])
    np.testing.assert_allclose(c.rate_loop(s, err, 0.01), p_only.rate_p * err)


def test_rate_integrator_grows_until_clamp(gains):
    c = CascadeController(gains)
    s = RigidBodyState.at_rest()
    err = np.array([1.0, 0.0, 0.0])
    history = []
    for _ in range(2000):
        c.rate_loop(s, err, 0.01)
        history.append(c.rate_integral[0])
    h = np.array(history)
    assert np.all(np.diff(h) >= 0)
    # closed form before the clamp: k * dt
    np.testing.assert_allclose(h[:10], 0.01 * np.arange(1, 11), rtol=1e-12)
    assert h[-1] * gains.rate_i[0] == pytest.approx(0.3)


def test_mixer_examples(params):
    np.testing.assert_allclose(mix(0.5, np.zeros(3)), 0.5)
    m = mix(0.5, np.array([0, 0, 0.1]))
    assert m[0] > 0.5 and m[1] > 0.5 and m[2] < 0.5 and m[3] < 0.5
    assert m[0] - 0.5 == pytest.approx(0.5 - m[2])
    for axis in range(3):
        for sign in (1, -1):
            torque = np.zeros(3)
            torque[axis] = 0.1 * sign
            speeds = np.sqrt(mix(0.5, torque)) * params.omega_max
            t = wrench_from_motors(speeds, params).torque
            assert np.sign(t[axis]) == sign
            assert np.all(np.abs(np.delete(t, axis)) < 1e-12)


def test_mixer_shape():
    assert MIXER.shape == (4, 3)
    np.testing.assert_allclose(np.abs(MIXER), 1.0)


def test_closed_loop_step(params, gains):
    c = CascadeController(gains)
    s = RigidBodyState.hovering(params, (0, 0, -1.5))
    c.reset(s)
    target = np.array([1.0, 0.0, -1.5])
    dt = 1 / 650
    errs = []
    for _ in range(int(5 / dt)):
        u = c.update(s, target, dt)
        s = integrate(s, np.sqrt(u) * params.omega_max, dt, params)
        errs.append(np.linalg.norm(s.position - target))
    assert errs[-1] < 0.02
    assert max(errs[int(3 / dt):]) < 0.1


def test_gains_validation():
    with pytest.raises(ValueError):
        CascadeGains(max_tilt=2.0)
    with pytest.raises(ValueError):
        CascadeGains(pos_p=(-1, 1, 1))
    with pytest.raises(ValueError):
        CascadeGains(hover_throttle=1.5)
