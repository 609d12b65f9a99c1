"""PPO with a tanh-squashed Gaussian policy and a separate critic."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from ..errors import TrainingDiverged
from ..nn import CRITIC_DIMS, POLICY_DIMS, Adam, MLP, mlp_backward, mlp_forward, param_count

LOG_STD_MIN, LOG_STD_MAX = -4.0, 1.0
SQUASH_EPS = 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    num_envs: int = 256
    horizon: int = 64
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.003
    max_grad_norm: float = 1.0
    total_updates: int = 2000
    seed: int = 0
    init_log_std: float = 0.0

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise ValueError("gamma and lambda must be in (0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be > 0")

    @classmethod
    def from_config(cls, cfg: Mapping) -> "PpoConfig":
        kwargs = {}
        for f in fields(cls):
            key = "lambda" if f.name == "lam" else f.name
            if key in cfg:
                kwargs[f.name] = int(cfg[key]) if f.type == "int" else float(cfg[key])
        return cls(**kwargs)


class ActorCritic:
    """Policy MLP, its log-std vector and the critic MLP over one flat array.

    Layout: ``[policy params | log_std (4) | critic params]``.
    """

    def __init__(self, params=None, dtype=np.float32):
        n_pi, n_v = param_count(POLICY_DIMS), param_count(CRITIC_DIMS)
        act_dim = POLICY_DIMS[-1]
        if params is None:
            params = np.zeros(n_pi + act_dim + n_v, dtype=dtype)
        self.params = params
        self.policy = MLP(POLICY_DIMS, params[:n_pi])
        self.log_std = params[n_pi : n_pi + act_dim]
        self.critic = MLP(CRITIC_DIMS, params[n_pi + act_dim :])
        self._slices = (slice(0, n_pi), slice(n_pi, n_pi + act_dim), slice(n_pi + act_dim, None))

    @classmethod
    def initialize(cls, rng: np.random.Generator, action_bias=0.0, log_std=0.0, dtype=np.float32) -> "ActorCritic":
        """Random init with near-zero output weights.

        ``action_bias`` (in squashed action space) seeds the output bias so the
        initial mean action is e.g. the hover command.
        """
        ac = cls(dtype=dtype)
        ac.policy.init(rng, last_layer_scale=0.01)
        ac.policy.biases[-1][...] += np.arctanh(np.clip(action_bias, -0.999, 0.999))
        ac.critic.init(rng)
        ac.log_std[...] = log_std
        return ac

    def copy(self) -> "ActorCritic":
        return ActorCritic(self.params.copy())

    def split(self, flat):
        return tuple(flat[s] for s in self._slices)


def squashed_log_prob(pre_tanh, mean, log_std):
    """Log density of ``a = tanh(u)``, ``u ~ N(mean, exp(log_std))``, summed over the last axis."""
    std = np.exp(log_std)
    gauss = -0.5 * np.square((pre_tanh - mean) / std) - log_std - 0.5 * LOG_2PI
    a = np.tanh(pre_tanh)
    return np.sum(gauss - np.log(1.0 - np.square(a) + SQUASH_EPS), axis=-1)


def gaussian_entropy(log_std) -> float:
    """Entropy of the pre-squash Gaussian (the squashed one has no closed form)."""
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def gae(rewards, values, bootstrap_value, dones, gamma: float, lam: float):
    """Generalized advantage estimates along axis 0 (time).

    ``dones[t]`` marks that the episode ended at step t, so ``values[t+1]``
    belongs to a fresh episode and is masked.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values and dones must have equal shapes")
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    last = np.zeros_like(rewards[0])
    for t in range(len(rewards) - 1, -1, -1):
        notdone = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * notdone - values[t]
        last = delta + gamma * lam * notdone * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


@dataclass
class RolloutBuffer:
    """Time-major ``(horizon, num_envs, ...)`` storage for one rollout."""

    obs: np.ndarray
    pre_tanh: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray

    @classmethod
    def empty(cls, horizon: int, num_envs: int, obs_dim: int, act_dim: int) -> "RolloutBuffer":
        return cls(
            obs=np.zeros((horizon, num_envs, obs_dim), dtype=np.float32),
            pre_tanh=np.zeros((horizon, num_envs, act_dim), dtype=np.float32),
            log_probs=np.zeros((horizon, num_envs)),
            rewards=np.zeros((horizon, num_envs)),
            values=np.zeros((horizon, num_envs)),
            dones=np.zeros((horizon, num_envs)),
        )


def normalize_advantages(adv, eps: float = 1e-8):
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + eps)


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    surrogate_per_epoch: tuple = ()


def ppo_loss_and_grad(ac: ActorCritic, obs, pre_tanh, old_log_probs, advantages, returns, cfg: PpoConfig):
    """Clipped-surrogate loss on one minibatch and its gradient wrt ``ac.params``.

    Returns:
        (grad, dict of loss terms and diagnostics)
    """
    n = len(obs)
    mean, pcache = mlp_forward(ac.policy, obs)
    log_std = ac.log_std.astype(np.float64)
    std = np.exp(log_std)
    diff = (pre_tanh - mean) / std
    log_probs = squashed_log_prob(pre_tanh, mean, log_std)
    log_ratio = log_probs - old_log_probs
    ratio = np.exp(log_ratio)
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    unclipped_obj = ratio * advantages
    clipped_obj = clipped * advantages
    surrogate = np.minimum(unclipped_obj, clipped_obj)
    policy_loss = -float(surrogate.mean())

    values, vcache = mlp_forward(ac.critic, obs)
    values = values[:, 0]
    value_err = values - returns
    value_loss = float(np.mean(np.square(value_err)))
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite PPO loss (policy {policy_loss}, value {value_loss})")

    # d(-mean(min(.)))/d log_prob: only where the unclipped branch is selected
    active = unclipped_obj <= clipped_obj
    g_logp = -(advantages * ratio * active) / n
    # d log_prob / d mean = (u - mean)/std^2 ; d/d log_std = diff^2 - 1
    g_mean = (g_logp[:, None] * diff / std).astype(ac.params.dtype)
    g_log_std = np.sum(g_logp[:, None] * (np.square(diff) - 1.0), axis=0) - cfg.entropy_coef
    g_pi, _ = mlp_backward(ac.policy, pcache, g_mean)
    g_v, _ = mlp_backward(ac.critic, vcache, (2.0 * cfg.value_coef * value_err / n)[:, None].astype(ac.params.dtype))

    grad = np.concatenate([g_pi, g_log_std.astype(ac.params.dtype), g_v])
    info = dict(
        loss=loss,
        policy_loss=policy_loss,
        value_loss=value_loss,
        entropy=entropy,
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
        approx_kl=float(np.mean(ratio - 1.0 - log_ratio)),
        surrogate=float(surrogate.mean()),
    )
    return grad, info


def clip_grad_norm(grad, max_norm: float):
    norm = float(np.linalg.norm(grad.astype(np.float64)))
    if norm > max_norm:
        grad *= max_norm / (norm + 1e-12)
    return norm


def ppo_update(buffer: RolloutBuffer, advantages, returns, ac: ActorCritic, optimizer: Adam,
               cfg: PpoConfig, rng: np.random.Generator) -> UpdateStats:
    """Several epochs of shuffled-minibatch clipped-surrogate optimization."""
    obs = buffer.obs.reshape(-1, buffer.obs.shape[-1])
    pre = buffer.pre_tanh.reshape(-1, buffer.pre_tanh.shape[-1]).astype(np.float64)
    old_lp = buffer.log_probs.reshape(-1)
    adv_all = np.asarray(advantages).reshape(-1)
    ret_all = np.asarray(returns).reshape(-1)
    total = len(obs)
    mb = total // cfg.minibatches
    infos = []
    surrogate_per_epoch = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(total)
        epoch_surr = []
        for k in range(cfg.minibatches):
            idx = perm[k * mb : (k + 1) * mb]
            adv = normalize_advantages(adv_all[idx])
            grad, info = ppo_loss_and_grad(ac, obs[idx], pre[idx], old_lp[idx], adv, ret_all[idx], cfg)
            clip_grad_norm(grad, cfg.max_grad_norm)
            optimizer.step(ac.params, grad)
            np.clip(ac.log_std, LOG_STD_MIN, LOG_STD_MAX, out=ac.log_std)
            infos.append(info)
            epoch_surr.append(info["surrogate"])
        surrogate_per_epoch.append(float(np.mean(epoch_surr)))
    mean = {k: float(np.mean([i[k] for i in infos])) for k in infos[0]}
    return UpdateStats(
        policy_loss=mean["policy_loss"],
        value_loss=mean["value_loss"],
        entropy=mean["entropy"],
        clip_fraction=mean["clip_fraction"],
        approx_kl=mean["approx_kl"],
        surrogate_per_epoch=tuple(surrogate_per_epoch),
    )
