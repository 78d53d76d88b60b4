"""Reinforcement-learning power allocation: environment, PPO agent, training."""

from .checkpoint import load_checkpoint, save_checkpoint
from .env import EnvConfig, EnvState, RewardBreakdown, dynamic_order, env_reset, env_step, reward
from .ppo import PpoConfig, PpoModel, advantage_nstep, policy_forward, ppo_update
from .train import evaluate, random_policy_reward, train

__all__ = [
    "EnvConfig",
    "EnvState",
    "PpoConfig",
    "PpoModel",
    "RewardBreakdown",
    "advantage_nstep",
    "dynamic_order",
    "env_reset",
    "env_step",
    "evaluate",
    "load_checkpoint",
    "policy_forward",
    "ppo_update",
    "random_policy_reward",
    "reward",
    "save_checkpoint",
    "train",
]
