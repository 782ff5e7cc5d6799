"""Reproducible, splittable random streams.

A stream is addressed by ``(seed, key)`` where ``key`` is a tuple of
non-negative integers. Each address maps to an independent Philox
(counter-based) generator through :class:`numpy.random.SeedSequence`, so
parallel workers can draw from disjoint substreams without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SEED_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


@dataclass(frozen=True)
class SeededStream:
    seed: int
    key: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        check_seed(self.seed)
        key = (self.key,) if isinstance(self.key, (int, np.integer)) else tuple(self.key)
        if any(int(k) < 0 for k in key):
            raise ConfigError("stream key entries must be non-negative")
        object.__setattr__(self, "key", tuple(int(k) for k in key))

    def child(self, *key: int) -> "SeededStream":
        return SeededStream(self.seed, self.key + tuple(key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))


def generator(seed: int, *key: int) -> np.random.Generator:
    """Shorthand for ``SeededStream(seed, key).generator()``."""
    return SeededStream(seed, key or (0,)).generator()
