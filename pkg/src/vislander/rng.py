"""Named random streams.

Every random draw in the package comes from a ``numpy.random.Generator``
derived from the single run seed plus a stream name and, for per-environment
streams, the environment index. Batched draws take either one generator
(draws the whole batch at once) or a sequence of generators, one per row,
so a row's values never depend on how environments are grouped.
"""

from __future__ import annotations

import zlib
from collections.abc import Sequence

import numpy as np

STREAMS = ("env", "init", "noise", "policy", "ppo", "eval")


def stream_key(name: str) -> int:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    return zlib.crc32(name.encode())


def make_rng(seed: int, name: str, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream_key(name), *index])))


def make_rngs(seed: int, name: str, n: int, *prefix: int) -> list[np.random.Generator]:
    return [make_rng(seed, name, *prefix, i) for i in range(n)]


Rngs = np.random.Generator | Sequence[np.random.Generator]


def _rows(rngs: Rngs, fn, shape):
    if isinstance(rngs, np.random.Generator):
        return fn(rngs, shape)
    return np.stack([fn(g, shape[1:]) for g in rngs]) if len(rngs) else np.zeros(shape)


def uniform(rngs: Rngs, shape, low=0.0, high=1.0) -> np.ndarray:
    return _rows(rngs, lambda g, s: g.uniform(low, high, size=s), tuple(shape))


def normal(rngs: Rngs, shape) -> np.ndarray:
    return _rows(rngs, lambda g, s: g.standard_normal(size=s), tuple(shape))


def batch_shape(rngs: Rngs, data_shape: tuple[int, ...] = ()) -> tuple[int, ...]:
    """Leading batch shape for a draw. One generator covers the data's batch;
    a sequence of generators must match the data's single batch axis, if any."""
    if isinstance(rngs, np.random.Generator):
        return tuple(data_shape)
    if data_shape and tuple(data_shape) != (len(rngs),):
        raise ValueError(f"{len(rngs)} generators for batch shape {tuple(data_shape)}")
    return (len(rngs),)


def get_state(rngs: Sequence[np.random.Generator]) -> list[dict]:
    return [g.bit_generator.state for g in rngs]


def set_state(rngs: Sequence[np.random.Generator], states: Sequence[dict]) -> None:
    for g, s in zip(rngs, states, strict=True):
        g.bit_generator.state = s
