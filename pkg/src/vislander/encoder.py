"""Two-view sparse feature encoder.

Keypoints and descriptors of the current and previous feature sets are
embedded, refined by blocks of self-attention (within a set) and
cross-attention (between sets, biased by the descriptor match prior), and
pooled into one fixed-length vector ``F_t``.

Invalid slots are zeroed before embedding, excluded from every attention
softmax as keys and from the pooling, so their contents cannot influence the
output. If either set has no valid slot the encoder returns a learned
constant ("no-feature" embedding).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .vision import SparseFeatureSet, l2_normalize

PRIOR_SENTINEL = -1.0e4
_KEY_MASK = -1.0e9


@dataclass
class MatchPrior:
    similarity: np.ndarray  # (..., N_now, N_prev), sentinel where either slot is invalid
    valid: np.ndarray       # (..., N_now, N_prev) bool


def match_prior(now: SparseFeatureSet, prev: SparseFeatureSet) -> MatchPrior:
    """Cosine similarity between current (rows) and previous (cols) descriptors."""
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.nan_to_num(l2_normalize(now.descriptors))
        b = np.nan_to_num(l2_normalize(prev.descriptors))
    sim = np.einsum("...id,...jd->...ij", a, b)
    valid = now.valid[..., :, None] & prev.valid[..., None, :]
    return MatchPrior(np.where(valid, sim, PRIOR_SENTINEL), valid)


def prior_matrix(desc_now, mask_now, desc_prev, mask_prev):
    """Torch counterpart of :func:`match_prior` used inside the network.

    Masked pairs are 0 here rather than a sentinel: invalid keys are already
    removed by the attention mask, and a finite value keeps gradients clean.
    """
    dtype = desc_now.dtype
    sim = F.normalize(desc_now, dim=-1) @ F.normalize(desc_prev, dim=-1).transpose(-1, -2)
    return sim * (mask_now.to(dtype)[..., :, None] * mask_prev.to(dtype)[..., None, :])


@dataclass
class EncoderConfig:
    descriptor_dim: int = 64
    embed_dim: int = 128
    num_layers: int = 2
    num_heads: int = 4
    output_dim: int = 64

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")


def _attend(q, k, v, bias):
    # q: (B, H, Nq, dh); bias broadcastable to (B, H, Nq, Nk)
    logits = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1]) + bias
    return torch.softmax(logits, dim=-1) @ v


class AttentionBlock(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.merge = nn.Linear(3 * dim, dim)
        self.out = nn.Linear(dim, dim)
        self.norm = nn.LayerNorm(dim)

    def _split(self, x):
        b, n, _ = x.shape
        q, k, v = self.qkv(x).view(b, n, 3, self.heads, -1).permute(2, 0, 3, 1, 4)
        return q, k, v

    def _update(self, x, self_msg, cross_msg):
        b, h, n, dh = self_msg.shape
        self_msg = self_msg.transpose(1, 2).reshape(b, n, h * dh)
        cross_msg = cross_msg.transpose(1, 2).reshape(b, n, h * dh)
        delta = self.out(F.gelu(self.merge(torch.cat([x, self_msg, cross_msg], dim=-1))))
        return self.norm(x + delta)

    def forward(self, xa, xb, bias_a, bias_b, prior_ab):
        qa, ka, va = self._split(xa)
        qb, kb, vb = self._split(xb)
        self_a = _attend(qa, ka, va, bias_a)
        self_b = _attend(qb, kb, vb, bias_b)
        cross_a = _attend(qa, kb, vb, bias_b + prior_ab)
        cross_b = _attend(qb, ka, va, bias_a + prior_ab.transpose(-1, -2))
        return self._update(xa, self_a, cross_a), self._update(xb, self_b, cross_b)


class FeatureEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig | None = None):
        super().__init__()
        cfg = cfg or EncoderConfig()
        self.cfg = cfg
        d = cfg.embed_dim
        self.desc_proj = nn.Linear(cfg.descriptor_dim, d)
        self.pos_proj = nn.Linear(2, d)
        self.blocks = nn.ModuleList(AttentionBlock(d, cfg.num_heads) for _ in range(cfg.num_layers))
        self.prior_scale = nn.Parameter(torch.ones(cfg.num_layers))
        self.head = nn.Linear(2 * d, cfg.output_dim)
        self.no_feature = nn.Parameter(torch.zeros(cfg.output_dim))

    def embed(self, kp, desc, mask):
        m = mask.unsqueeze(-1).to(kp.dtype)
        return self.desc_proj(desc * m) + self.pos_proj(kp * m)

    def forward(self, kp_now, desc_now, mask_now, kp_prev, desc_prev, mask_prev):
        """Return ``(F_t, empty)`` where ``empty`` flags rows that fell back to the no-feature embedding."""
        dtype = kp_now.dtype
        xa = self.embed(kp_now, desc_now, mask_now)
        xb = self.embed(kp_prev, desc_prev, mask_prev)

        fa = mask_now.to(dtype)
        fb = mask_prev.to(dtype)
        bias_a = ((1.0 - fa) * _KEY_MASK)[:, None, None, :]
        bias_b = ((1.0 - fb) * _KEY_MASK)[:, None, None, :]
        sim = prior_matrix(desc_now, mask_now, desc_prev, mask_prev)[:, None]

        for i, block in enumerate(self.blocks):
            xa, xb = block(xa, xb, bias_a, bias_b, self.prior_scale[i] * sim)

        pooled_a = (xa * fa[..., None]).sum(1) / fa.sum(1, keepdim=True).clamp(min=1.0)
        pooled_b = (xb * fb[..., None]).sum(1) / fb.sum(1, keepdim=True).clamp(min=1.0)
        out = self.head(torch.cat([pooled_a, pooled_b], dim=-1))
        empty = (fa.sum(1) == 0) | (fb.sum(1) == 0)
        out = torch.where(empty[:, None], self.no_feature.expand_as(out), out)
        return out, empty
