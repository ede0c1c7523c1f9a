"""MLP actor/critic networks and the squashed Gaussian action distribution."""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
import torch
from torch import nn

DTYPE = torch.float64
LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0


def mlp(in_dim: int, out_dim: int, hidden: int = 256) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden, dtype=DTYPE),
        nn.ReLU(),
        nn.Linear(hidden, hidden, dtype=DTYPE),
        nn.ReLU(),
        nn.Linear(hidden, out_dim, dtype=DTYPE),
    )


@contextmanager
def seeded(seed: int):
    """Run a block under a private torch RNG state (used for weight init)."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed % 2**64)
        yield


def _log1m_tanh_sq(u: torch.Tensor) -> torch.Tensor:
    # log(1 - tanh(u)^2), stable for large |u|
    return 2.0 * (math.log(2.0) - u - nn.functional.softplus(-2.0 * u))


class GaussianPolicy(nn.Module):
    """Diagonal Gaussian over a pre-squash variable u; actions are
    ``low + (high - low) * (tanh(u) + 1) / 2``.

    Rollouts store u, so log-probabilities of past actions are exact and
    never need an atanh of a saturated value.
    """

    def __init__(self, state_dim: int, action_dim: int, low, high, hidden: int = 256, init_log_std: float = -1.5):
        super().__init__()
        self.state_dim, self.action_dim = state_dim, action_dim
        self.net = mlp(state_dim, action_dim, hidden)
        self.log_std = nn.Parameter(torch.full((action_dim,), float(init_log_std), dtype=DTYPE))
        low = torch.tensor(np.broadcast_to(low, (action_dim,)), dtype=DTYPE)
        high = torch.tensor(np.broadcast_to(high, (action_dim,)), dtype=DTYPE)
        if torch.any(high <= low):
            raise ValueError("action bounds need low < high")
        self.register_buffer("low", low)
        self.register_buffer("high", high)

    @property
    def half_range(self) -> torch.Tensor:
        return (self.high - self.low) / 2

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mean = self.net(obs)
        std = self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).exp().expand_as(mean)
        return mean, std

    def squash(self, u: torch.Tensor) -> torch.Tensor:
        return self.low + self.half_range * (torch.tanh(u) + 1)

    def log_prob(self, obs: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        """Log density of the squashed action produced from ``u``, summed over dimensions."""
        mean, std = self(obs)
        # non-finite parameters must reach the trainers' divergence checks, not a validation error
        gauss = torch.distributions.Normal(mean, std, validate_args=False).log_prob(u)
        jac = _log1m_tanh_sq(u) + torch.log(self.half_range)
        return (gauss - jac).sum(-1)

    def sample(self, obs: torch.Tensor, generator: torch.Generator | None = None):
        """Returns (action, u, log_prob)."""
        with torch.no_grad():
            mean, std = self(obs)
            noise = torch.randn(mean.shape, generator=generator, dtype=DTYPE)
            u = mean + std * noise
            return self.squash(u), u, self.log_prob(obs, u)

    def deterministic(self, obs: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.squash(self(obs)[0])


class Critic(nn.Module):
    def __init__(self, state_dim: int, hidden: int = 256):
        super().__init__()
        self.net = mlp(state_dim, 1, hidden)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.net(obs).squeeze(-1)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def make_policy(env, hidden: int = 256, seed: int = 0, init_log_std: float = -1.5) -> GaussianPolicy:
    with seeded(seed):
        return GaussianPolicy(env.state_dim, env.action_dim, env.action_low, env.action_high, hidden, init_log_std)


def make_critic(env, hidden: int = 256, seed: int = 0) -> Critic:
    with seeded((seed + 1) % 2**64):
        return Critic(env.state_dim, hidden)


def policy_sample(policy: GaussianPolicy, state, generator: torch.Generator | None = None) -> tuple[np.ndarray, float]:
    """Draw one action for a single state; returns (action, log_prob)."""
    obs = torch.as_tensor(np.asarray(state, dtype=float), dtype=DTYPE)
    action, _, logp = policy.sample(obs, generator)
    return action.numpy(), float(logp)
