"""Gaussian actor-critic with tanh-squashed actions.

The actor and critic are separate two-layer tanh MLPs fed the same input
``x_t = [F_t | s_t | s_{t-1} | a_{t-1}]``. The actor emits Gaussian means
over a pre-squash action ``u``; ``tanh(u)`` is mapped affinely onto the
physical command ranges, and log-probabilities include the change-of-variables
correction so they are densities over physical commands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import EncoderConfig, FeatureEncoder
from .observation import ACTION_DIM, STATE_DIM
from .sim import ANGLE_LIMIT, YAW_LIMIT, VehicleParams

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
X_LAYOUT = ("features", "state_now", "state_prev", "prev_action")
OBS_KEYS = ("kp_now", "desc_now", "mask_now", "kp_prev", "desc_prev", "mask_prev", "state", "prev_action")


class PolicyDivergence(FloatingPointError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass
class PolicyConfig:
    hidden: int = 512
    init_log_std: float = math.log(0.5)
    hover_init: bool = True  # thrust output bias starts at the hover command instead of mid-range


def input_dim(feature_dim: int, layout=X_LAYOUT) -> int:
    sizes = {"features": feature_dim, "state_now": STATE_DIM, "state_prev": STATE_DIM, "prev_action": ACTION_DIM}
    unknown = [name for name in layout if name not in sizes]
    if unknown:
        raise ValueError(f"fields {unknown} are not part of the policy input x_t")
    return sum(sizes[name] for name in layout)


def action_scale(vehicle: VehicleParams) -> np.ndarray:
    """Half-width of each physical command range (roll, pitch, yaw, thrust)."""
    return np.array([ANGLE_LIMIT, ANGLE_LIMIT, YAW_LIMIT, vehicle.max_thrust / 2])


def hover_bias(vehicle: VehicleParams) -> float:
    """Pre-squash thrust value whose command equals the vehicle weight."""
    return math.atanh(2.0 * vehicle.hover_thrust / vehicle.max_thrust - 1.0)


def _mlp(n_in: int, hidden: int, n_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(n_in, hidden), nn.Tanh(), nn.Linear(hidden, hidden), nn.Tanh(),
                         nn.Linear(hidden, n_out))


def _init_mlp(net: nn.Sequential, out_gain: float) -> None:
    linears = [m for m in net if isinstance(m, nn.Linear)]
    for i, layer in enumerate(linears):
        nn.init.orthogonal_(layer.weight, gain=out_gain if i == len(linears) - 1 else 1.0)
        nn.init.zeros_(layer.bias)


class Actor(nn.Module):
    def __init__(self, n_in: int, cfg: PolicyConfig):
        super().__init__()
        self.net = _mlp(n_in, cfg.hidden, ACTION_DIM)
        self.log_std = nn.Parameter(torch.full((ACTION_DIM,), cfg.init_log_std))
        _init_mlp(self.net, 0.01)

    def forward(self, x):
        return self.net(x), self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)


class Critic(nn.Module):
    """Value head. ``layout`` names the x_t fields it consumes; anything outside x_t is refused."""

    def __init__(self, feature_dim: int, cfg: PolicyConfig, layout=X_LAYOUT):
        super().__init__()
        if tuple(layout) != X_LAYOUT:
            input_dim(feature_dim, layout)  # raises on privileged fields
            raise ValueError(f"critic input must be exactly {X_LAYOUT}")
        self.net = _mlp(input_dim(feature_dim), cfg.hidden, 1)
        _init_mlp(self.net, 1.0)

    def forward(self, x):
        return self.net(x).squeeze(-1)


def gaussian_log_prob(u, mean, log_std):
    return (-0.5 * ((u - mean) / log_std.exp()) ** 2 - log_std - 0.5 * math.log(2 * math.pi)).sum(-1)


def squash_log_det(u, scale):
    """log |d action / d u| summed over components, for action = scale * tanh(u) + offset."""
    log_one_minus_tanh2 = 2.0 * (math.log(2.0) - u - nn.functional.softplus(-2.0 * u))
    return (log_one_minus_tanh2 + torch.log(scale)).sum(-1)


def gaussian_entropy(log_std):
    return (0.5 * math.log(2 * math.pi * math.e) + log_std).sum(-1)


@dataclass
class ActionSample:
    raw: np.ndarray       # (B, 4) pre-squash
    unit: np.ndarray      # (B, 4) tanh(raw), in (-1, 1)
    log_prob: np.ndarray  # (B,)


class ActorCritic(nn.Module):
    def __init__(self, vehicle: VehicleParams, enc_cfg: EncoderConfig | None = None,
                 pol_cfg: PolicyConfig | None = None):
        super().__init__()
        enc_cfg = enc_cfg or EncoderConfig()
        pol_cfg = pol_cfg or PolicyConfig()
        self.enc_cfg, self.pol_cfg = enc_cfg, pol_cfg
        self.encoder = FeatureEncoder(enc_cfg)
        self.actor = Actor(input_dim(enc_cfg.output_dim), pol_cfg)
        self.critic = Critic(enc_cfg.output_dim, pol_cfg)
        self.register_buffer("scale", torch.tensor(action_scale(vehicle), dtype=torch.float32))
        if pol_cfg.hover_init:
            with torch.no_grad():
                self.actor.net[-1].bias[3] = hover_bias(vehicle)

    @property
    def x_dim(self) -> int:
        return input_dim(self.enc_cfg.output_dim)

    def policy_input(self, obs: dict):
        feats, _ = self.encoder(obs["kp_now"], obs["desc_now"], obs["mask_now"],
                                obs["kp_prev"], obs["desc_prev"], obs["mask_prev"])
        return torch.cat([feats, obs["state"], obs["prev_action"]], dim=-1)

    def log_prob(self, raw, mean, log_std):
        return gaussian_log_prob(raw, mean, log_std) - squash_log_det(raw, self.scale.to(raw.dtype))

    def act(self, x, noise: np.ndarray | None = None, deterministic: bool = False) -> ActionSample:
        """Sample from the actor given ``x_t``.

        ``noise`` is a ``(B, 4)`` array of standard normal draws supplied by the
        caller's random streams; deterministic mode uses the mean.
        """
        with torch.no_grad():
            mean, log_std = self.actor(x)
            if not torch.isfinite(mean).all():
                raise PolicyDivergence("policy divergence", _dump(x, mean, log_std))
            if deterministic:
                raw = mean
            else:
                raw = mean + log_std.exp() * torch.as_tensor(noise, dtype=mean.dtype)
            lp = self.log_prob(raw, mean, log_std)
        raw_np = raw.cpu().numpy().astype(np.float64)
        return ActionSample(raw_np, np.tanh(raw_np), lp.cpu().numpy().astype(np.float64))

    def evaluate(self, x, raw):
        mean, log_std = self.actor(x)
        lp = self.log_prob(raw, mean, log_std)
        ent = gaussian_entropy(log_std).expand(x.shape[0])
        return lp, ent, self.critic(x)

    def value(self, x):
        return self.critic(x)


def _dump(x, mean, log_std) -> dict:
    return {
        "x_finite": bool(torch.isfinite(x).all()),
        "x_absmax": float(torch.nan_to_num(x).abs().max()),
        "mean_nonfinite": int((~torch.isfinite(mean)).sum()),
        "log_std": log_std.tolist(),
    }


def build_model(vehicle: VehicleParams, enc_cfg: EncoderConfig | None, pol_cfg: PolicyConfig | None,
                seed: int) -> ActorCritic:
    """Construct with a private torch RNG so initialization depends only on ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return ActorCritic(vehicle, enc_cfg, pol_cfg)


def to_tensors(obs: dict, dtype=torch.float32) -> dict:
    out = {}
    for k in OBS_KEYS:
        v = torch.as_tensor(obs[k])
        out[k] = v if v.dtype == torch.bool else v.to(dtype)
    return out
