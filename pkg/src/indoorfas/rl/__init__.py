"""Reinforcement-learning environment, policies and the PPO/GRPO trainers."""

from indoorfas.rl.config import TrainConfig
from indoorfas.rl.env import PENALTY, BanditEnv, ConstantRewardEnv, FasEnv
from indoorfas.rl.grpo import (
    Group,
    Trajectory,
    clipped_term,
    group_advantages,
    grpo_objective,
    grpo_train,
    kl_estimate,
)
from indoorfas.rl.policy import Critic, GaussianPolicy, make_critic, make_policy, parameter_count, policy_sample
from indoorfas.rl.ppo import ppo_init

__all__ = [
    "PENALTY", "BanditEnv", "ConstantRewardEnv", "Critic", "FasEnv", "GaussianPolicy", "Group",
    "TrainConfig", "Trajectory", "clipped_term", "group_advantages", "grpo_objective", "grpo_train",
    "kl_estimate", "make_critic", "make_policy", "parameter_count", "policy_sample", "ppo_init",
]
