"""Group relative policy optimization: critic-free clipped policy updates."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from indoorfas.rl.config import TrainConfig, make_optimizer
from indoorfas.rl.log import TrainingLog
from indoorfas.rl.policy import DTYPE, GaussianPolicy, make_policy

STD_EPS = 1e-8


def group_advantages(rewards, eps: float = STD_EPS, sample_std: bool = False) -> np.ndarray:
    """Standardize rewards within a group: (r - mean) / max(std, eps)."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("a group needs at least two rewards")
    std = r.std(ddof=1 if sample_std else 0)
    return (r - r.mean()) / max(std, eps)


def clipped_term(ratio, advantage, c: float):
    """min(ratio * A, clip(ratio, 1 - c, 1 + c) * A) for floats or tensors."""
    if isinstance(ratio, torch.Tensor) or isinstance(advantage, torch.Tensor):
        ratio = torch.as_tensor(ratio, dtype=DTYPE)
        return torch.minimum(ratio * advantage, ratio.clamp(1 - c, 1 + c) * advantage)
    return min(ratio * advantage, min(max(ratio, 1 - c), 1 + c) * advantage)


def kl_estimate(ref_prob: float, cur_prob: float) -> float:
    """Non-negative KL estimator r - log r - 1 with r = ref_prob / cur_prob."""
    if not (ref_prob > 0 and cur_prob > 0):
        raise ValueError("probabilities must be positive")
    r = ref_prob / cur_prob
    return r - math.log(r) - 1


def kl_from_logs(log_ref: torch.Tensor, log_cur: torch.Tensor) -> torch.Tensor:
    """The same estimator on log-densities (densities of continuous actions overflow easily)."""
    d = log_ref - log_cur
    return torch.exp(d) - d - 1


@dataclass
class Trajectory:
    observations: np.ndarray  # (O, d_s)
    raw_actions: np.ndarray  # (O, d_a) pre-squash samples
    actions: np.ndarray  # (O, d_a)
    rewards: np.ndarray  # (O,)
    log_probs: np.ndarray  # (O,) under the sampling policy

    @property
    def final_reward(self) -> float:
        return float(self.rewards[-1])

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class Group:
    trajectories: list[Trajectory]
    advantages: np.ndarray = field(default=None)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.final_reward for t in self.trajectories])


def rollout(env, policy: GaussianPolicy, start: np.ndarray, length: int, generator: torch.Generator) -> Trajectory:
    obs, raws, acts, rews, logps = [], [], [], [], []
    state = np.asarray(start, dtype=float)
    for _ in range(length):
        a, u, logp = policy.sample(torch.as_tensor(state, dtype=DTYPE), generator)
        action = a.numpy()
        nxt, r = env.step(state, action)
        obs.append(state)
        raws.append(u.numpy())
        acts.append(action)
        rews.append(r)
        logps.append(float(logp))
        state = np.asarray(nxt, dtype=float)
    return Trajectory(np.array(obs), np.array(raws), np.array(acts), np.array(rews, dtype=float), np.array(logps))


def sample_group(env, policy: GaussianPolicy, cfg: TrainConfig, rng: np.random.Generator, generator: torch.Generator) -> Group:
    """G trajectories of length O from one randomly drawn start, scored by their last reward."""
    start = env.reset(rng)
    trajs = [rollout(env, policy, start, cfg.trajectory_length, generator) for _ in range(cfg.group_size)]
    group = Group(trajs)
    group.advantages = group_advantages(group.rewards, sample_std=cfg.sample_std)
    return group


def _stack(group: Group):
    obs = torch.as_tensor(np.concatenate([t.observations for t in group.trajectories]), dtype=DTYPE)
    raw = torch.as_tensor(np.concatenate([t.raw_actions for t in group.trajectories]), dtype=DTYPE)
    lengths = [len(t) for t in group.trajectories]
    adv = torch.as_tensor(np.repeat(group.advantages, lengths), dtype=DTYPE)
    weight = torch.as_tensor(np.repeat([1.0 / n for n in lengths], lengths), dtype=DTYPE) / len(lengths)
    return obs, raw, adv, weight


def grpo_objective(group: Group, policy, old_policy, ref_policy, cfg: TrainConfig, return_kl: bool = False):
    """(1/G) sum_g (1/O_g) sum_t [clipped ratio * A_g - eta * KL(ref || current)].

    Differentiable with respect to ``policy``; the old and reference policies
    are evaluated without gradients.
    """
    obs, raw, adv, weight = _stack(group)
    logp = policy.log_prob(obs, raw)
    with torch.no_grad():
        logp_old = old_policy.log_prob(obs, raw)
        logp_ref = ref_policy.log_prob(obs, raw)
    ratio = torch.exp(logp - logp_old)
    surrogate = clipped_term(ratio, adv, cfg.clip)
    kl = kl_from_logs(logp_ref, logp)
    value = torch.sum(weight * (surrogate - cfg.kl_penalty * kl))
    if return_kl:
        return value, torch.sum(weight * kl).detach()
    return value


@dataclass
class GrpoResult:
    policy: GaussianPolicy
    reference: GaussianPolicy
    records: list[dict]
    skipped_updates: int = 0


def grpo_train(
    env, cfg: TrainConfig, reference: GaussianPolicy | None = None, log: TrainingLog | None = None
) -> GrpoResult:
    """Train from the reference policy for ``cfg.grpo_iterations`` iterations.

    Each iteration snapshots the old policy, samples one group, then takes
    ``cfg.inner_updates`` gradient-ascent steps on the GRPO objective over the
    whole group. Updates with non-finite gradients are skipped and logged.
    """
    if reference is None:
        reference = make_policy(env, cfg.hidden, cfg.seed, cfg.init_log_std)
    reference = copy.deepcopy(reference).requires_grad_(False)
    policy = copy.deepcopy(reference).requires_grad_(True)
    opt = make_optimizer(policy.parameters(), cfg)
    log = log if log is not None else TrainingLog()
    rng = np.random.default_rng(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    skipped = 0
    for it in range(cfg.grpo_iterations):
        old = copy.deepcopy(policy).requires_grad_(False)
        group = sample_group(env, old, cfg, rng, generator)
        kl_values, skipped_here = [], 0
        for _ in range(cfg.inner_updates):
            opt.zero_grad()
            objective, kl = grpo_objective(group, policy, old, reference, cfg, return_kl=True)
            (-objective).backward()
            grads = [p.grad for p in policy.parameters() if p.grad is not None]
            if not torch.isfinite(objective) or any(not torch.all(torch.isfinite(g)) for g in grads):
                skipped_here += 1
                continue
            if cfg.max_grad_norm is not None:
                torch.nn.utils.clip_grad_norm_(policy.parameters(), cfg.max_grad_norm)
            opt.step()
            kl_values.append(float(kl))
        skipped += skipped_here
        rewards = group.rewards
        record = {
            "iteration": it,
            "group_mean": float(rewards.mean()),
            "group_max": float(rewards.max()),
            "kl_mean": float(np.mean(kl_values)) if kl_values else None,
        }
        if skipped_here:
            record["skipped_updates"] = skipped_here
        log.append(record)
    return GrpoResult(policy, reference, log.records, skipped)
