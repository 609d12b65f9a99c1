"""Quad-X rigid-body simulator with first-order motor lag.

Frames follow the autopilot convention: world NED, body FRD, thrust along
body -z. Motor numbering::

        front
      3       1        1, 2 spin CCW (reaction torque +z body)
        \\   /          3, 4 spin CW  (reaction torque -z body)
          X
        /   \\
      2       4

All state arrays may carry leading batch axes; ``integrate`` then steps every
vehicle at once, which is what the training environment relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import ParameterError, SimulationDiverged
from .rotations import quat_exp, quat_multiply

# (x, y) sign of each motor position and its rotor direction (+1 = CCW)
MOTOR_XY_SIGNS = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
MOTOR_DIRECTIONS = np.array([1.0, 1.0, -1.0, -1.0])


def compute_thrust_coefficient(mass: float, hover_speed: float, gravity: float = 9.81) -> float:
    """Thrust coefficient from the hover balance ``4 k w_h^2 = m g``.

    Args:
        mass: vehicle mass [kg].
        hover_speed: rotor speed measured in steady hover [rad/s].
        gravity: [m/s^2].

    Returns:
        k_thrust [N s^2 / rad^2].
    """
    for name, v in (("mass", mass), ("hover_speed", hover_speed), ("gravity", gravity)):
        if not np.isfinite(v) or v <= 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    return mass * gravity / (4.0 * hover_speed**2)


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1.2
    inertia_diag: tuple = (0.0117, 0.0117, 0.0222)
    arm_length: float = 0.21
    k_thrust: float = compute_thrust_coefficient(1.2, 1000.0)
    thrust_to_torque: float = 0.016
    motor_tau: float = 0.05
    omega_max: float = 1256.0
    gravity: float = 9.81
    # derived, filled in __post_init__
    motor_xy: np.ndarray = field(init=False, repr=False, compare=False)
    torque_map: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        scalars = dict(
            mass=self.mass,
            arm_length=self.arm_length,
            k_thrust=self.k_thrust,
            thrust_to_torque=self.thrust_to_torque,
            motor_tau=self.motor_tau,
            omega_max=self.omega_max,
            gravity=self.gravity,
        )
        for name, v in scalars.items():
            if not np.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be positive, got {v}")
        inertia = tuple(float(v) for v in self.inertia_diag)
        if len(inertia) != 3 or min(inertia) <= 0:
            raise ParameterError(f"inertia_diag must be 3 positive values, got {self.inertia_diag}")
        object.__setattr__(self, "inertia_diag", inertia)
        xy = MOTOR_XY_SIGNS * self.arm_length / np.sqrt(2.0)
        object.__setattr__(self, "motor_xy", xy)
        # torque = torque_map @ per-motor thrust; for thrust f along -z at
        # (x, y, 0): r x F = (-y f, x f, 0), plus rotor drag torque.
        tmap = np.stack([-xy[:, 1], xy[:, 0], MOTOR_DIRECTIONS * self.thrust_to_torque])
        object.__setattr__(self, "torque_map", tmap)

    @property
    def hover_speed(self) -> float:
        return float(np.sqrt(self.mass * self.gravity / (4.0 * self.k_thrust)))

    @property
    def hover_throttle(self) -> float:
        """Per-motor thrust fraction of maximum needed to hover."""
        return (self.hover_speed / self.omega_max) ** 2

    @property
    def inertia(self) -> np.ndarray:
        return np.asarray(self.inertia_diag)

    @classmethod
    def from_config(cls, cfg: Mapping) -> "VehicleParams":
        """Build from a parsed key-value config.

        ``k_thrust`` is taken as-is when present, otherwise derived from
        ``hover_speed`` (rad/s).
        """
        kwargs = {}
        for key in ("mass", "arm_length", "thrust_to_torque", "motor_tau", "omega_max", "gravity"):
            if key in cfg:
                kwargs[key] = float(cfg[key])
        if "inertia_diag" in cfg:
            kwargs["inertia_diag"] = tuple(cfg["inertia_diag"])
        if "k_thrust" in cfg:
            kwargs["k_thrust"] = float(cfg["k_thrust"])
        elif "hover_speed" in cfg:
            kwargs["k_thrust"] = compute_thrust_coefficient(
                kwargs.get("mass", cls.mass), float(cfg["hover_speed"]), kwargs.get("gravity", cls.gravity)
            )
        return cls(**kwargs)


@dataclass
class RigidBodyState:
    """Vehicle state; every field may carry the same leading batch shape."""

    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    angular_velocity: np.ndarray
    motor_speed: np.ndarray

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0), motor_speed=0.0, attitude=(1.0, 0.0, 0.0, 0.0)):
        return cls(
            position=np.array(position, dtype=float),
            velocity=np.zeros(3),
            attitude=np.array(attitude, dtype=float),
            angular_velocity=np.zeros(3),
            motor_speed=np.full(4, float(motor_speed)),
        )

    @classmethod
    def hovering(cls, params: VehicleParams, position=(0.0, 0.0, 0.0)):
        return cls.at_rest(position, motor_speed=params.hover_speed)

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(
            self.position.copy(),
            self.velocity.copy(),
            self.attitude.copy(),
            self.angular_velocity.copy(),
            self.motor_speed.copy(),
        )

    def is_finite(self):
        return (
            np.isfinite(self.position).all(-1)
            & np.isfinite(self.velocity).all(-1)
            & np.isfinite(self.attitude).all(-1)
            & np.isfinite(self.angular_velocity).all(-1)
            & np.isfinite(self.motor_speed).all(-1)
        )


@dataclass(frozen=True)
class BodyWrench:
    force: np.ndarray
    torque: np.ndarray


def motor_step(current, commanded, dt: float, tau: float):
    """Advance rotor speed one step of the exact first-order lag solution."""
    alpha = -np.expm1(-dt / tau)
    return current + (commanded - current) * alpha


def wrench_from_motors(motor_speed, params: VehicleParams) -> BodyWrench:
    thrusts = params.k_thrust * np.square(motor_speed)
    total = thrusts.sum(axis=-1)
    force = np.zeros(np.shape(total) + (3,))
    force[..., 2] = -total
    torque = thrusts @ params.torque_map.T
    return BodyWrench(force=force, torque=torque)


def integrate(
    state: RigidBodyState,
    commanded_speeds,
    dt: float,
    params: VehicleParams,
    check: bool = True,
) -> RigidBodyState:
    """One semi-implicit Euler step.

    Motors lag toward the (clamped) command first; the wrench is evaluated on
    the new speeds. Velocity is updated before position, angular rate before
    attitude; attitude is advanced with the exponential map and renormalized.

    Raises:
        SimulationDiverged: if ``check`` and any output is non-finite.
    """
    if not 0 < dt <= 0.05:
        raise ParameterError(f"dt must be in (0, 0.05], got {dt}")
    cmd = np.clip(commanded_speeds, 0.0, params.omega_max)
    motors = np.clip(motor_step(state.motor_speed, cmd, dt, params.motor_tau), 0.0, params.omega_max)
    wrench = wrench_from_motors(motors, params)

    q = state.attitude
    # body -z thrust rotated into world: -f * third column of R(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    f = -wrench.force[..., 2]
    accel = np.stack(
        [
            -f * 2 * (x * z + w * y),
            -f * 2 * (y * z - w * x),
            -f * (1 - 2 * (x * x + y * y)),
        ],
        axis=-1,
    ) / params.mass
    accel[..., 2] += params.gravity
    velocity = state.velocity + accel * dt
    position = state.position + velocity * dt

    inertia = params.inertia
    omega = state.angular_velocity
    omega_dot = (wrench.torque - np.cross(omega, omega * inertia)) / inertia
    omega = omega + omega_dot * dt
    attitude = quat_multiply(q, quat_exp(omega * dt))
    attitude = attitude / np.linalg.norm(attitude, axis=-1, keepdims=True)

    new = RigidBodyState(position, velocity, attitude, omega, motors)
    if check and not np.all(new.is_finite()):
        raise SimulationDiverged("non-finite state after integration step")
    return new


def with_params(params: VehicleParams, **changes) -> VehicleParams:
    return replace(params, **changes)
