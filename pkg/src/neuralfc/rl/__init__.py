"""PPO training of the end-to-end setpoint policy."""

from .env import EpisodeConfig, RewardWeights, VecHoverEnv, reward, terminated
from .ppo import ActorCritic, PpoConfig, RolloutBuffer, gae, ppo_update
from .train import TrainResult, TrainSettings, evaluate, train

__all__ = [
    "ActorCritic", "EpisodeConfig", "PpoConfig", "RewardWeights", "RolloutBuffer", "TrainResult",
    "TrainSettings", "VecHoverEnv", "evaluate", "gae", "ppo_update", "reward", "terminated", "train",
]
