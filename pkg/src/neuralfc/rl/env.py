"""Vectorized hover/setpoint-tracking environment and its reward."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from ..dynamics import RigidBodyState, VehicleParams, integrate
from ..observation import OBS_DIM, build_observation, up_alignment
from ..rotations import quat_from_euler

MAX_POS_ERROR = 8.0


@dataclass(frozen=True)
class RewardWeights:
    w_pos: float = 1.0
    sigma_pos: float = 0.8
    w_up: float = 0.2
    k_up: float = 10.0
    w_vel: float = 0.05
    w_angvel: float = 0.01
    w_act: float = 0.02
    w_act_diff: float = 0.05
    crash_penalty: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"reward weight {f.name} must be >= 0")
        if self.sigma_pos <= 0:
            raise ValueError("sigma_pos must be > 0")

    @classmethod
    def from_config(cls, cfg: Mapping) -> "RewardWeights":
        return cls(**{f.name: float(cfg[f.name]) for f in fields(cls) if f.name in cfg})


def terminated(position, attitude, setpoint, finite=None):
    """Episode end: far from the setpoint, inverted, or non-finite state."""
    err = np.linalg.norm(np.subtract(setpoint, position), axis=-1)
    done = ~(err <= MAX_POS_ERROR) | (up_alignment(attitude) < 0)
    if finite is not None:
        done |= ~finite
    return done


def reward(position, velocity, attitude, angular_velocity, action, prev_action, setpoint, weights: RewardWeights, finite=None):
    """Shaped per-step reward; broadcasts over leading batch axes."""
    err2 = np.sum(np.square(np.subtract(setpoint, position)), axis=-1)
    r = weights.w_pos * np.exp(-err2 / weights.sigma_pos)
    r = r + weights.w_up * np.exp(-weights.k_up * (1.0 - up_alignment(attitude)))
    r = r - weights.w_vel * np.linalg.norm(velocity, axis=-1)
    r = r - weights.w_angvel * np.linalg.norm(angular_velocity, axis=-1)
    r = r - weights.w_act * np.linalg.norm(action, axis=-1)
    r = r - weights.w_act_diff * np.linalg.norm(np.subtract(action, prev_action), axis=-1)
    crashed = terminated(position, attitude, setpoint, finite)
    return np.where(crashed, -weights.crash_penalty, r)[()]


def state_reward(state: RigidBodyState, action, prev_action, setpoint, weights: RewardWeights):
    return reward(
        state.position, state.velocity, state.attitude, state.angular_velocity,
        action, prev_action, setpoint, weights,
    )


def action_to_speed(action, params: VehicleParams):
    """Policy action in [-1, 1] -> commanded rotor speed [rad/s]."""
    return 0.5 * (np.asarray(action) + 1.0) * params.omega_max


@dataclass
class EpisodeConfig:
    dt: float = 0.01
    episode_steps: int = 800
    init_pos_range: float = 2.0
    init_vel_std: float = 0.2
    init_angvel_std: float = 0.2
    init_tilt_std: float = 0.1

    @classmethod
    def from_config(cls, cfg: Mapping) -> "EpisodeConfig":
        out = cls()
        for f in fields(cls):
            if f.name in cfg:
                setattr(out, f.name, type(getattr(out, f.name))(cfg[f.name]))
        return out


class VecHoverEnv:
    """``num_envs`` independent vehicles that must reach a fixed setpoint.

    Each episode starts near the setpoint with random yaw, a little tilt and a
    small random twist, motors at hover speed. Episodes end on
    :func:`terminated` or after ``episode_steps`` (truncation).
    """

    def __init__(self, num_envs: int, params: VehicleParams, weights: RewardWeights,
                 episode: EpisodeConfig, rng: np.random.Generator):
        self.n = num_envs
        self.params = params
        self.weights = weights
        self.episode = episode
        self.rng = rng
        self.setpoint = np.zeros((num_envs, 3))
        self.state = RigidBodyState(
            np.zeros((num_envs, 3)), np.zeros((num_envs, 3)), np.zeros((num_envs, 4)),
            np.zeros((num_envs, 3)), np.zeros((num_envs, 4)),
        )
        self.prev_action = np.zeros((num_envs, 4))
        self.steps = np.zeros(num_envs, dtype=np.int64)
        self.reset(np.ones(num_envs, dtype=bool))

    def reset(self, mask) -> None:
        k = int(np.count_nonzero(mask))
        if k == 0:
            return
        ep, rng = self.episode, self.rng
        pos = rng.uniform(-ep.init_pos_range, ep.init_pos_range, (k, 3))
        vel = rng.normal(0.0, ep.init_vel_std, (k, 3))
        tilt = rng.normal(0.0, ep.init_tilt_std, (k, 2))
        yaw = rng.uniform(-np.pi, np.pi, k)
        angvel = rng.normal(0.0, ep.init_angvel_std, (k, 3))
        s = self.state
        s.position[mask] = self.setpoint[mask] + pos
        s.velocity[mask] = vel
        s.attitude[mask] = quat_from_euler(tilt[:, 0], tilt[:, 1], yaw)
        s.angular_velocity[mask] = angvel
        s.motor_speed[mask] = self.params.hover_speed
        hover_action = 2.0 * self.params.hover_speed / self.params.omega_max - 1.0
        self.prev_action[mask] = hover_action
        self.steps[mask] = 0

    def observe(self, out=None):
        if out is None:
            out = np.empty((self.n, OBS_DIM), dtype=np.float32)
        s = self.state
        return build_observation(s.position, s.velocity, s.attitude, s.angular_velocity, self.setpoint, out=out)

    def step(self, action, auto_reset: bool = True):
        """Advance every env.

        Returns:
            (reward, terminated, truncated, final_obs) where ``final_obs`` is the
            pre-reset observation (needed to bootstrap truncated episodes). With
            ``auto_reset`` envs that ended are reset before returning.
        """
        action = np.clip(action, -1.0, 1.0)
        s = integrate(self.state, action_to_speed(action, self.params), self.episode.dt, self.params, check=False)
        finite = s.is_finite()
        if not finite.all():
            for arr in (s.position, s.velocity, s.angular_velocity, s.motor_speed):
                arr[~finite] = 0.0
            s.attitude[~finite] = (1.0, 0.0, 0.0, 0.0)
        self.state = s
        r = reward(s.position, s.velocity, s.attitude, s.angular_velocity, action, self.prev_action,
                   self.setpoint, self.weights, finite)
        self.prev_action = action.astype(float)
        self.steps += 1
        term = terminated(s.position, s.attitude, self.setpoint, finite)
        trunc = (self.steps >= self.episode.episode_steps) & ~term
        final_obs = self.observe()
        if auto_reset:
            self.reset(term | trunc)
        return r, term, trunc, final_obs

    def position_error(self):
        return np.linalg.norm(self.setpoint - self.state.position, axis=-1)
