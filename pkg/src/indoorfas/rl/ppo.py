"""Clipped-surrogate PPO with a critic and GAE; produces the GRPO reference policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from indoorfas.rl.config import TrainConfig, make_optimizer
from indoorfas.rl.grpo import clipped_term
from indoorfas.rl.log import TrainingLog
from indoorfas.rl.policy import DTYPE, Critic, GaussianPolicy, make_critic, make_policy


class TrainingDiverged(RuntimeError):
    pass


def gae(rewards, values, dones, last_value: float, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and returns for one rollout buffer.

    ``dones[t]`` marks that step t ended its episode (no bootstrapping past it).
    """
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = last_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + np.asarray(values)


@dataclass
class PpoResult:
    actor: GaussianPolicy
    critic: Critic
    records: list[dict]
    steps: int


def ppo_init(
    env, cfg: TrainConfig, log: TrainingLog | None = None, actor: GaussianPolicy | None = None,
    critic: Critic | None = None,
) -> PpoResult:
    """Train actor and critic for ``cfg.ppo_init_steps`` environment steps.

    Episodes last ``cfg.trajectory_length`` steps from ``env.reset``. After
    every ``cfg.rollout_steps`` steps the buffer is used for ``cfg.ppo_epochs``
    passes of minibatch (``cfg.batch_size``) updates. With zero steps the
    freshly initialized actor is returned unchanged.
    """
    actor = actor if actor is not None else make_policy(env, cfg.hidden, cfg.seed, cfg.init_log_std)
    critic = critic if critic is not None else make_critic(env, cfg.hidden, cfg.seed)
    log = log if log is not None else TrainingLog()
    if cfg.ppo_init_steps == 0:
        return PpoResult(actor, critic, log.records, 0)
    params = list(actor.parameters()) + list(critic.parameters())
    opt = make_optimizer(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    perm_gen = torch.Generator().manual_seed((cfg.seed + 1) % 2**64)
    steps, update = 0, 0
    state = env.reset(rng)
    t_in_episode = 0
    while steps < cfg.ppo_init_steps:
        n = min(cfg.rollout_steps, cfg.ppo_init_steps - steps)
        obs, raws, rews, logps, dones = [], [], [], [], []
        for _ in range(n):
            s = torch.as_tensor(state, dtype=DTYPE)
            a, u, logp = actor.sample(s, generator)
            nxt, r = env.step(state, a.numpy())
            t_in_episode += 1
            done = t_in_episode >= cfg.trajectory_length
            obs.append(state)
            raws.append(u.numpy())
            rews.append(r)
            logps.append(float(logp))
            dones.append(done)
            if done:
                state, t_in_episode = env.reset(rng), 0
            else:
                state = np.asarray(nxt, dtype=float)
        steps += n
        obs_t = torch.as_tensor(np.array(obs), dtype=DTYPE)
        raw_t = torch.as_tensor(np.array(raws), dtype=DTYPE)
        with torch.no_grad():
            values = critic(obs_t).numpy()
            last_value = 0.0 if dones[-1] else float(critic(torch.as_tensor(state, dtype=DTYPE)))
        adv, ret = gae(np.array(rews), values, dones, last_value, cfg.gamma, cfg.gae_lambda)
        adv_t = torch.as_tensor(adv, dtype=DTYPE)
        ret_t = torch.as_tensor(ret, dtype=DTYPE)
        old_logp = torch.as_tensor(np.array(logps), dtype=DTYPE)
        policy_losses, value_losses = [], []
        for _ in range(cfg.ppo_epochs):
            order = torch.randperm(n, generator=perm_gen)
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                mb_adv = adv_t[idx]
                if len(idx) > 1:
                    mb_adv = (mb_adv - mb_adv.mean()) / (mb_adv.std(unbiased=False) + 1e-8)
                ratio = torch.exp(actor.log_prob(obs_t[idx], raw_t[idx]) - old_logp[idx])
                policy_loss = -clipped_term(ratio, mb_adv, cfg.clip).mean()
                value_loss = torch.mean((critic(obs_t[idx]) - ret_t[idx]) ** 2)
                loss = policy_loss + cfg.value_coef * value_loss
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite PPO loss at update {update} (policy {policy_loss.item()}, value {value_loss.item()})"
                    )
                opt.zero_grad()
                loss.backward()
                if cfg.max_grad_norm is not None:
                    # per network, so the critic's large value gradients cannot starve the actor
                    torch.nn.utils.clip_grad_norm_(actor.parameters(), cfg.max_grad_norm)
                    torch.nn.utils.clip_grad_norm_(critic.parameters(), cfg.max_grad_norm)
                opt.step()
                policy_losses.append(float(policy_loss.detach()))
                value_losses.append(float(value_loss.detach()))
        log.append(
            {
                "update": update,
                "steps": steps,
                "reward_mean": float(np.mean(rews)),
                "reward_max": float(np.max(rews)),
                "policy_loss": float(np.mean(policy_losses)),
                "value_loss": float(np.mean(value_losses)),
            }
        )
        update += 1
    return PpoResult(actor, critic, log.records, steps)
