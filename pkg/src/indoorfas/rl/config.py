from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import torch


@dataclass(frozen=True)
class TrainConfig:
    group_size: int = 8
    trajectory_length: int = 5
    ppo_init_steps: int = 25_000  # environment steps
    grpo_iterations: int = 100
    inner_updates: int = 4
    clip: float = 0.1
    kl_penalty: float = 1e-4
    learning_rate: float = 9.46e-4
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "sgd"  # "sgd" (plain gradient ascent) or "adam"
    hidden: int = 256
    init_log_std: float = -1.5
    # PPO reference training
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_steps: int = 1000
    ppo_epochs: int = 4
    value_coef: float = 0.5
    max_grad_norm: float | None = 0.5  # gradient-norm clip per network; None disables
    sample_std: bool = False  # sample instead of population std for group advantages

    def __post_init__(self):
        positive = (
            "group_size", "trajectory_length", "inner_updates", "learning_rate", "batch_size",
            "hidden", "rollout_steps", "ppo_epochs",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        for name in ("ppo_init_steps", "grpo_iterations", "kl_penalty", "value_coef"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ValueError("max_grad_norm must be positive or None")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**doc)


def make_optimizer(params, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.learning_rate)
    return torch.optim.SGD(params, lr=cfg.learning_rate)
