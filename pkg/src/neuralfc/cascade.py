"""Classical cascaded controller: position -> velocity -> attitude -> rate -> mixer.

A functional stand-in for the stock autopilot cascade. It flies takeoff,
landing and acts as the fallback whenever the neural mode faults.

Thrust and motor outputs here are *thrust fractions* in [0, 1] (fraction of
per-motor maximum thrust), which keeps the mixer linear. The flight stack
converts them to normalized rotor-speed commands before publishing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import MOTOR_DIRECTIONS, MOTOR_XY_SIGNS, RigidBodyState, VehicleParams
from .errors import ParameterError
from .rotations import quat_conjugate, quat_multiply, quat_to_euler, rotmat_to_quat

INTEGRATOR_LIMIT = 0.3


def _vec3(v) -> np.ndarray:
    a = np.broadcast_to(np.asarray(v, dtype=float), (3,))
    return a.copy()


@dataclass
class CascadeGains:
    pos_p: np.ndarray = field(default_factory=lambda: _vec3(1.2))
    vel_p: np.ndarray = field(default_factory=lambda: _vec3(2.5))
    vel_i: np.ndarray = field(default_factory=lambda: _vec3(0.4))
    vel_d: np.ndarray = field(default_factory=lambda: _vec3(0.05))
    att_p: np.ndarray = field(default_factory=lambda: _vec3(6.0))
    rate_p: np.ndarray = field(default_factory=lambda: _vec3(0.15))
    rate_i: np.ndarray = field(default_factory=lambda: _vec3(0.05))
    rate_d: np.ndarray = field(default_factory=lambda: _vec3(0.003))
    max_tilt: float = 0.6
    max_vel: float = 3.0
    hover_throttle: float = VehicleParams().hover_throttle

    _VECTORS = ("pos_p", "vel_p", "vel_i", "vel_d", "att_p", "rate_p", "rate_i", "rate_d")

    def __post_init__(self):
        for name in self._VECTORS:
            v = _vec3(getattr(self, name))
            if np.any(v < 0):
                raise ParameterError(f"{name} must be non-negative")
            setattr(self, name, v)
        if not 0 < self.hover_throttle < 1:
            raise ParameterError(f"hover_throttle must be in (0, 1), got {self.hover_throttle}")
        if not 0 <= self.max_tilt < np.pi / 2:
            raise ParameterError(f"max_tilt must be in [0, pi/2), got {self.max_tilt}")
        if self.max_vel < 0:
            raise ParameterError("max_vel must be non-negative")

    @classmethod
    def from_config(cls, cfg: Mapping, params: VehicleParams | None = None) -> "CascadeGains":
        kwargs = {k: cfg[k] for k in cls._VECTORS if k in cfg}
        for key in ("max_tilt", "max_vel", "hover_throttle"):
            if key in cfg:
                kwargs[key] = float(cfg[key])
        if "hover_throttle" not in kwargs and params is not None:
            kwargs["hover_throttle"] = params.hover_throttle
        return cls(**kwargs)


def mixer_matrix() -> np.ndarray:
    """4x3 map from normalized (roll, pitch, yaw) torque to motor thrust fractions.

    Pseudo-inverse of the layout's torque sign table, each column scaled to
    unit max magnitude.
    """
    signs = np.stack([-MOTOR_XY_SIGNS[:, 1], MOTOR_XY_SIGNS[:, 0], MOTOR_DIRECTIONS])  # 3x4
    m = np.linalg.pinv(signs)
    return m / np.abs(m).max(axis=0)


MIXER = mixer_matrix()


def position_loop(state: RigidBodyState, setpoint_pos, gains: CascadeGains) -> np.ndarray:
    v_sp = gains.pos_p * (np.asarray(setpoint_pos, dtype=float) - state.position)
    n = np.linalg.norm(v_sp)
    if n > gains.max_vel:
        v_sp *= gains.max_vel / n
    return v_sp


def attitude_loop(state: RigidBodyState, attitude_setpoint, gains: CascadeGains) -> np.ndarray:
    q_err = quat_multiply(quat_conjugate(state.attitude), np.asarray(attitude_setpoint, dtype=float))
    if q_err[0] < 0:
        q_err = -q_err
    return 2.0 * gains.att_p * q_err[1:]


def mix(thrust: float, torque_command) -> np.ndarray:
    return np.clip(thrust + MIXER @ np.asarray(torque_command, dtype=float), 0.0, 1.0)


def thrust_to_attitude(thrust_vec, yaw: float) -> np.ndarray:
    """Attitude whose body -z axis is along ``thrust_vec`` (world NED) at ``yaw``."""
    z_b = -np.asarray(thrust_vec, dtype=float)
    z_b /= np.linalg.norm(z_b)
    x_c = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    y_b = np.cross(z_b, x_c)
    y_b /= np.linalg.norm(y_b)
    x_b = np.cross(y_b, z_b)
    return rotmat_to_quat(np.column_stack([x_b, y_b, z_b]))


class CascadeController:
    """Stateful cascade; holds the velocity and rate integrators plus yaw hold."""

    def __init__(self, gains: CascadeGains, gravity: float = 9.81):
        self.gains = gains
        self.gravity = gravity
        self.yaw_setpoint = 0.0
        self.reset()

    def reset(self, state: RigidBodyState | None = None) -> None:
        """Clear integrators and derivative memory; latch yaw from ``state``."""
        self.vel_integral = np.zeros(3)
        self.rate_integral = np.zeros(3)
        self._prev_vel_err = None
        self._prev_rate_err = None
        if state is not None:
            self.yaw_setpoint = float(quat_to_euler(state.attitude)[2])

    def velocity_loop(self, state: RigidBodyState, velocity_setpoint, dt: float):
        """Velocity PID -> (collective thrust fraction, attitude setpoint).

        The PID produces an acceleration demand; adding gravity compensation
        and scaling by hover_throttle/g gives the thrust-fraction vector.
        """
        if dt <= 0:
            raise ParameterError("dt must be positive")
        g = self.gains
        err = np.asarray(velocity_setpoint, dtype=float) - state.velocity
        deriv = np.zeros(3) if self._prev_vel_err is None else (err - self._prev_vel_err) / dt
        self._prev_vel_err = err
        scale = g.hover_throttle / self.gravity
        limit = np.divide(INTEGRATOR_LIMIT, g.vel_i * scale, out=np.zeros(3), where=g.vel_i > 0)
        self.vel_integral = np.clip(self.vel_integral + err * dt, -limit, limit)
        accel = g.vel_p * err + g.vel_i * self.vel_integral + g.vel_d * deriv

        thrust_vec = scale * accel
        thrust_vec[2] -= g.hover_throttle
        # keep some upward thrust and bound the tilt
        thrust_vec[2] = min(thrust_vec[2], -0.1 * g.hover_throttle)
        horiz = np.linalg.norm(thrust_vec[:2])
        max_horiz = -thrust_vec[2] * np.tan(g.max_tilt)
        if horiz > max_horiz:
            thrust_vec[:2] *= max_horiz / horiz
        thrust = min(float(np.linalg.norm(thrust_vec)), 1.0)
        return thrust, thrust_to_attitude(thrust_vec, self.yaw_setpoint)

    def rate_loop(self, state: RigidBodyState, rate_setpoint, dt: float) -> np.ndarray:
        if dt <= 0:
            raise ParameterError("dt must be positive")
        g = self.gains
        err = np.asarray(rate_setpoint, dtype=float) - state.angular_velocity
        deriv = np.zeros(3) if self._prev_rate_err is None else (err - self._prev_rate_err) / dt
        self._prev_rate_err = err
        limit = np.divide(INTEGRATOR_LIMIT, g.rate_i, out=np.zeros(3), where=g.rate_i > 0)
        self.rate_integral = np.clip(self.rate_integral + err * dt, -limit, limit)
        out = g.rate_p * err + g.rate_i * self.rate_integral + g.rate_d * deriv
        return np.clip(out, -1.0, 1.0)

    def update(self, state: RigidBodyState, setpoint_pos, dt: float) -> np.ndarray:
        """Full cascade for one tick; returns per-motor thrust fractions."""
        v_sp = position_loop(state, setpoint_pos, self.gains)
        thrust, q_sp = self.velocity_loop(state, v_sp, dt)
        rates = attitude_loop(state, q_sp, self.gains)
        torque = self.rate_loop(state, rates, dt)
        return mix(thrust, torque)
