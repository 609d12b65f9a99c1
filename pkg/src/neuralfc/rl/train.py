"""Training loop: rollouts, GAE, PPO updates, periodic deterministic evaluation."""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ..dynamics import VehicleParams
from ..errors import TrainingDiverged
from ..nn import Adam, MLP, mlp_forward
from ..observation import OBS_DIM
from .env import MAX_POS_ERROR, EpisodeConfig, RewardWeights, VecHoverEnv
from .ppo import ActorCritic, PpoConfig, RolloutBuffer, gae, ppo_update, squashed_log_prob

log = logging.getLogger(__name__)

CURVE_COLUMNS = (
    "update", "env_steps", "mean_step_reward", "mean_episode_return", "mean_pos_error",
    "eval_final_pos_error", "policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl",
)
EVAL_SEED_OFFSET = 10_000


@dataclass
class TrainSettings:
    """Everything ``train`` needs besides the vehicle model."""

    weights: RewardWeights = field(default_factory=RewardWeights)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    eval_every: int = 25
    eval_episodes: int = 64

    @classmethod
    def from_config(cls, cfg: Mapping) -> "TrainSettings":
        return cls(
            weights=RewardWeights.from_config(cfg),
            ppo=PpoConfig.from_config(cfg),
            episode=EpisodeConfig.from_config(cfg),
            eval_every=int(cfg.get("eval_every", 25)),
            eval_episodes=int(cfg.get("eval_episodes", 64)),
        )


@dataclass
class TrainResult:
    model: ActorCritic
    best_policy: MLP
    best_eval_error: float
    best_update: int
    curve: list


def policy_action(policy: MLP, obs):
    """Deterministic deployment action: tanh of the policy mean."""
    mean, _ = mlp_forward(policy, obs)
    return np.tanh(mean)


def evaluate(policy: MLP, params: VehicleParams, episode: EpisodeConfig, weights: RewardWeights,
             n_episodes: int = 64, seed: int = 12345, tail_steps: int = 100):
    """Run one deterministic episode per env from random starts.

    Returns:
        (mean over episodes of the mean position error over the final
        ``tail_steps`` steps, per-episode values). Episodes that terminate
        early count at the termination distance for the rest of the run.
    """
    env = VecHoverEnv(n_episodes, params, weights, episode, np.random.default_rng(seed))
    steps = episode.episode_steps
    tail = np.zeros(n_episodes)
    alive = np.ones(n_episodes, dtype=bool)
    obs = env.observe()
    for t in range(steps):
        _, term, _, obs = env.step(policy_action(policy, obs), auto_reset=False)
        alive &= ~term
        if t >= steps - tail_steps:
            tail += np.where(alive, env.position_error(), MAX_POS_ERROR)
    per_episode = tail / tail_steps
    return float(per_episode.mean()), per_episode


def checksum(params) -> str:
    return hashlib.sha256(np.ascontiguousarray(params).tobytes()).hexdigest()


class Trainer:
    """Holds environment, networks and optimizer across updates."""

    def __init__(self, params: VehicleParams, settings: TrainSettings):
        self.params = params
        self.settings = settings
        cfg = settings.ppo
        self.rng = np.random.default_rng(cfg.seed)
        hover_action = 2.0 * params.hover_speed / params.omega_max - 1.0
        self.model = ActorCritic.initialize(self.rng, action_bias=hover_action, log_std=cfg.init_log_std)
        self.optimizer = Adam(self.model.params.size, lr=cfg.lr)
        self.env = VecHoverEnv(cfg.num_envs, params, settings.weights, settings.episode, self.rng)
        self.buffer = RolloutBuffer.empty(cfg.horizon, cfg.num_envs, OBS_DIM, self.model.log_std.size)
        self.obs = self.env.observe()
        self.episode_return = np.zeros(cfg.num_envs)
        self.updates = 0

    def collect(self):
        """Fill the buffer with one horizon of experience; returns rollout stats."""
        cfg, ac, buf, env = self.settings.ppo, self.model, self.buffer, self.env
        finished_returns = []
        pos_err = 0.0
        for t in range(cfg.horizon):
            obs = self.obs
            mean, _ = mlp_forward(ac.policy, obs)
            value, _ = mlp_forward(ac.critic, obs)
            log_std = ac.log_std.astype(np.float64)
            pre = mean + np.exp(log_std) * self.rng.standard_normal(mean.shape)
            buf.obs[t] = obs
            buf.pre_tanh[t] = pre
            pre = buf.pre_tanh[t].astype(np.float64)
            buf.log_probs[t] = squashed_log_prob(pre, mean, log_std)
            buf.values[t] = value[:, 0]
            rew, term, trunc, final_obs = env.step(np.tanh(pre))
            if not np.all(np.isfinite(rew)):
                raise TrainingDiverged(f"non-finite reward at update {self.updates}")
            pos_err += float(np.mean(np.linalg.norm(final_obs[:, 0:3], axis=-1)))
            self.episode_return += rew
            if trunc.any():
                # bootstrap time-limit truncation from the critic
                v_final, _ = mlp_forward(ac.critic, final_obs[trunc])
                rew = rew.copy()
                rew[trunc] += cfg.gamma * v_final[:, 0]
            buf.rewards[t] = rew
            buf.dones[t] = term | trunc
            ended = term | trunc
            finished_returns.extend(self.episode_return[ended].tolist())
            self.episode_return[ended] = 0.0
            self.obs = env.observe()
        return dict(
            mean_step_reward=float(buf.rewards.mean()),
            mean_episode_return=float(np.mean(finished_returns)) if finished_returns else float("nan"),
            mean_pos_error=pos_err / cfg.horizon,
        )

    def update(self):
        cfg = self.settings.ppo
        stats = self.collect()
        bootstrap, _ = mlp_forward(self.model.critic, self.obs)
        adv, ret = gae(self.buffer.rewards, self.buffer.values, bootstrap[:, 0], self.buffer.dones, cfg.gamma, cfg.lam)
        upd = ppo_update(self.buffer, adv, ret, self.model, self.optimizer, cfg, self.rng)
        self.updates += 1
        if not np.all(np.isfinite(self.model.params)):
            raise TrainingDiverged(f"non-finite parameters after update {self.updates}")
        stats.update(
            update=self.updates,
            env_steps=self.updates * cfg.horizon * cfg.num_envs,
            policy_loss=upd.policy_loss,
            value_loss=upd.value_loss,
            entropy=upd.entropy,
            clip_fraction=upd.clip_fraction,
            approx_kl=upd.approx_kl,
        )
        return stats

    def evaluate(self, policy: MLP | None = None):
        s = self.settings
        return evaluate(policy or self.model.policy, self.params, s.episode, s.weights,
                        s.eval_episodes, seed=s.ppo.seed + EVAL_SEED_OFFSET)


def train(params: VehicleParams, settings: TrainSettings, progress: Callable | None = None,
          stop_below: float | None = None) -> TrainResult:
    """Train a hover/setpoint policy with PPO.

    Evaluates every ``eval_every`` updates (and after the last one) and keeps
    the best evaluated policy.

    Args:
        progress: optional callback receiving each curve row.
        stop_below: stop early once an evaluation falls below this error [m].
    """
    trainer = Trainer(params, settings)
    curve = []
    best_err, best_policy, best_update = float("inf"), trainer.model.policy.copy(), 0
    t0 = time.perf_counter()
    total = settings.ppo.total_updates
    for k in range(1, total + 1):
        row = trainer.update()
        row["eval_final_pos_error"] = float("nan")
        if k % settings.eval_every == 0 or k == total:
            err, _ = trainer.evaluate()
            row["eval_final_pos_error"] = err
            if err < best_err:
                best_err, best_policy, best_update = err, trainer.model.policy.copy(), k
            log.info("update %d  eval err %.4f m  step reward %.3f  (%.0fs)", k, err,
                     row["mean_step_reward"], time.perf_counter() - t0)
        if not np.isfinite(row["mean_step_reward"]):
            raise TrainingDiverged(f"mean reward is NaN at update {k}: {row}")
        curve.append({c: row[c] for c in CURVE_COLUMNS})
        if progress is not None:
            progress(curve[-1])
        if stop_below is not None and best_err < stop_below:
            break
    return TrainResult(trainer.model, best_policy, best_err, best_update, curve)


def write_curve(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in rows:
            w.writerow([row[c] if isinstance(row[c], int) else repr(float(row[c])) for c in CURVE_COLUMNS])
