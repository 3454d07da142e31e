"""Shared oracles for the test suite."""

import numpy as np
import torch


def directional_check(module: torch.nn.Module, loss_fn, gen: torch.Generator, h: float = 1e-6) -> float:
    """Worst relative error between autograd and central differences.

    Checks one random direction over all parameters plus one random direction
    per parameter tensor. Pairs where both derivatives are below 1e-9 are
    compared absolutely instead.
    """
    params = [p for p in module.parameters() if p.requires_grad]
    module.zero_grad()
    loss_fn().backward()
    grads = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]

    def fd(direction):
        with torch.no_grad():
            for p, d in zip(params, direction):
                p.add_(h * d)
            up = float(loss_fn())
            for p, d in zip(params, direction):
                p.sub_(2 * h * d)
            down = float(loss_fn())
            for p, d in zip(params, direction):
                p.add_(h * d)
        return (up - down) / (2 * h)

    def rand_like(p):
        return torch.randn(p.shape, generator=gen, dtype=p.dtype)

    directions = [[rand_like(p) for p in params]]
    for i in range(len(params)):
        directions.append([rand_like(p) if j == i else torch.zeros_like(p) for j, p in enumerate(params)])
    worst = 0.0
    for direction in directions:
        analytic = float(sum((g * d).sum() for g, d in zip(grads, direction)))
        numeric = fd(direction)
        scale = max(abs(analytic), abs(numeric))
        if scale < 1e-9:
            err = 0.0 if abs(analytic - numeric) < 1e-10 else np.inf
        else:
            err = abs(analytic - numeric) / scale
        worst = max(worst, err)
    return worst


def random_feature_batch(gen: np.random.Generator, batch: int, slots: int, dim: int, p_valid: float = 0.8,
                         dtype=torch.float64) -> dict:
    def one():
        desc = gen.normal(size=(batch, slots, dim))
        desc /= np.linalg.norm(desc, axis=-1, keepdims=True)
        mask = gen.uniform(size=(batch, slots)) < p_valid
        mask[:, 0] = True
        kp = gen.uniform(-0.7, 0.7, (batch, slots, 2))
        return torch.as_tensor(kp, dtype=dtype), torch.as_tensor(desc, dtype=dtype), torch.as_tensor(mask)
    kp_a, d_a, m_a = one()
    kp_b, d_b, m_b = one()
    return dict(kp_now=kp_a, desc_now=d_a, mask_now=m_a, kp_prev=kp_b, desc_prev=d_b, mask_prev=m_b)
