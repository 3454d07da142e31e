"""PPO with GAE over a fixed-length rollout buffer."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .policy import OBS_KEYS, ActorCritic, to_tensors

log = logging.getLogger(__name__)


@dataclass
class PPOConfig:
    total_timesteps: int = 100_000_000
    rollout_steps: int = 256
    minibatches: int = 16
    update_epochs: int = 1
    learning_rate: float = 3e-4
    gamma: float = 0.98
    gae_lambda: float = 0.95
    clip_coef: float = 0.2
    entropy_coef: float = 1e-3
    value_coef: float = 2.0
    max_grad_norm: float = 1.0
    num_envs: int = 64
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def check(self) -> None:
        if (self.rollout_steps * self.num_envs) % self.minibatches:
            raise ValueError("rollout_steps * num_envs must be divisible by minibatches")


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    grad_norm: float
    clipped_grad_norm: float
    approx_kl: float
    aborted: bool = False


class RolloutBuffer:
    """Per-step, per-env transitions stored as ``(T, N, ...)`` arrays.

    ``trunc_values`` holds the critic value of the observation that ended a
    truncated (timed-out) episode; it is the bootstrap for that step.
    """

    def __init__(self, steps: int, num_envs: int, obs_example: dict):
        self.steps, self.num_envs = steps, num_envs
        self.obs = {k: np.zeros((steps, num_envs) + v.shape[1:], dtype=v.dtype) for k, v in obs_example.items()}
        shape = (steps, num_envs)
        self.raw_actions = np.zeros(shape + (4,), dtype=np.float32)
        self.log_probs = np.zeros(shape)
        self.values = np.zeros(shape)
        self.rewards = np.zeros(shape)
        self.terminated = np.zeros(shape, dtype=bool)
        self.truncated = np.zeros(shape, dtype=bool)
        self.trunc_values = np.zeros(shape)
        self.advantages: np.ndarray | None = None
        self.returns: np.ndarray | None = None
        self.pos = 0

    def add(self, obs, raw, log_prob, value, reward, terminated, truncated, trunc_value):
        t = self.pos
        for k in self.obs:
            self.obs[k][t] = obs[k]
        self.raw_actions[t] = raw
        self.log_probs[t] = log_prob
        self.values[t] = value
        self.rewards[t] = reward
        self.terminated[t] = terminated
        self.truncated[t] = truncated
        self.trunc_values[t] = trunc_value
        self.pos += 1

    @property
    def full(self) -> bool:
        return self.pos == self.steps

    def reset(self):
        self.pos = 0
        self.advantages = self.returns = None


def compute_gae(rewards, values, terminated, truncated, trunc_values, bootstrap_values, gamma, lam):
    """Recursive generalized advantage estimation.

    Terminated steps do not bootstrap; truncated steps bootstrap from
    ``trunc_values``. The recursion never crosses an episode boundary.
    ``bootstrap_values`` is the value of the observation after the last step.
    """
    steps = rewards.shape[0]
    adv = np.zeros_like(rewards, dtype=np.float64)
    running = np.zeros_like(rewards[0], dtype=np.float64)
    for t in range(steps - 1, -1, -1):
        next_v = bootstrap_values if t == steps - 1 else values[t + 1]
        next_v = np.where(terminated[t], 0.0, np.where(truncated[t], trunc_values[t], next_v))
        delta = rewards[t] + gamma * next_v - values[t]
        cont = ~(terminated[t] | truncated[t])
        running = delta + gamma * lam * cont * running
        adv[t] = running
    return adv, adv + values


def finish_buffer(buf: RolloutBuffer, bootstrap_values, gamma, lam) -> None:
    if not buf.full:
        raise RuntimeError("advantages are computed only on a full buffer")
    buf.advantages, buf.returns = compute_gae(buf.rewards, buf.values, buf.terminated, buf.truncated,
                                              buf.trunc_values, bootstrap_values, gamma, lam)


def normalize_advantages(adv, eps: float = 1e-8):
    return (adv - adv.mean()) / (adv.std() + eps)


def clipped_surrogate(ratio, adv, clip: float):
    """Per-sample PPO objective (to be maximized)."""
    return torch.min(ratio * adv, torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * adv)


def _flat(a):
    return a.reshape((-1,) + a.shape[2:])


def ppo_update(model: ActorCritic, optimizer: torch.optim.Optimizer, buf: RolloutBuffer, cfg: PPOConfig,
               rng: np.random.Generator) -> UpdateStats:
    """One PPO update (``update_epochs`` passes over shuffled minibatches).

    On a non-finite loss the weights and optimizer state are restored to
    their values before the update and the stats are flagged ``aborted``.
    """
    if buf.advantages is None:
        raise RuntimeError("call finish_buffer before ppo_update")
    dtype = next(model.parameters()).dtype
    obs = {k: _flat(v) for k, v in buf.obs.items()}
    raw = torch.as_tensor(_flat(buf.raw_actions), dtype=dtype)
    old_lp = torch.as_tensor(_flat(buf.log_probs), dtype=dtype)
    adv = torch.as_tensor(normalize_advantages(_flat(buf.advantages)), dtype=dtype)
    ret = torch.as_tensor(_flat(buf.returns), dtype=dtype)
    n = raw.shape[0]
    mb = n // cfg.minibatches

    saved_model = copy.deepcopy(model.state_dict())
    saved_opt = copy.deepcopy(optimizer.state_dict())
    sums = dict(pg=0.0, v=0.0, ent=0.0, clip=0.0, gn=0.0, cgn=0.0, kl=0.0)
    count = 0
    params = list(model.parameters())
    for _ in range(cfg.update_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            batch = to_tensors({k: obs[k][idx] for k in OBS_KEYS}, dtype)
            x = model.policy_input(batch)
            lp, ent, value = model.evaluate(x, raw[idx])
            log_ratio = lp - old_lp[idx]
            ratio = log_ratio.exp()
            pg_loss = -clipped_surrogate(ratio, adv[idx], cfg.clip_coef).mean()
            v_loss = ((value - ret[idx]) ** 2).mean()
            entropy = ent.mean()
            loss = pg_loss - cfg.entropy_coef * entropy + cfg.value_coef * v_loss
            if not torch.isfinite(loss):
                log.error("non-finite PPO loss (pg=%s v=%s ent=%s); restoring weights",
                          pg_loss.item(), v_loss.item(), entropy.item())
                model.load_state_dict(saved_model)
                optimizer.load_state_dict(saved_opt)
                nan = float("nan")
                return UpdateStats(nan, nan, nan, nan, nan, nan, nan, aborted=True)
            optimizer.zero_grad()
            loss.backward()
            grad_norm = nn.utils.clip_grad_norm_(params, cfg.max_grad_norm)
            clipped = torch.sqrt(sum((p.grad.detach() ** 2).sum() for p in params if p.grad is not None))
            optimizer.step()
            with torch.no_grad():
                sums["pg"] += float(pg_loss)
                sums["v"] += float(v_loss)
                sums["ent"] += float(entropy)
                sums["clip"] += float(((ratio - 1).abs() > cfg.clip_coef).to(dtype).mean())
                sums["gn"] += float(grad_norm)
                sums["cgn"] = max(sums["cgn"], float(clipped))
                sums["kl"] += float(((ratio - 1) - log_ratio).mean())
            count += 1
    return UpdateStats(
        policy_loss=sums["pg"] / count,
        value_loss=sums["v"] / count,
        entropy=sums["ent"] / count,
        clip_fraction=sums["clip"] / count,
        grad_norm=sums["gn"] / count,
        clipped_grad_norm=sums["cgn"],
        approx_kl=sums["kl"] / count,
    )
