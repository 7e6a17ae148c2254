"""Seeded random number generation with derivable per-task streams."""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    """Stable 64-bit integer for seed derivation (independent of PYTHONHASHSEED)."""
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SeededRng:
    """PCG64 stream from a 64-bit seed; identical seed gives identical draws.

    ``spawn(*keys)`` derives an independent child stream from the parent seed
    and a tuple of keys (ints or strings), so per-prompt / per-worker streams
    are reproducible regardless of evaluation order.
    """

    def __init__(self, seed: int, _spawn_key: tuple = ()):
        self.seed = int(seed)
        self.spawn_key = _spawn_key
        entropy = [_key_to_int(self.seed)] + [_key_to_int(k) for k in _spawn_key]
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def spawn(self, *keys) -> "SeededRng":
        return SeededRng(self.seed, self.spawn_key + tuple(keys))

    def normal(self, shape=(), dtype=np.float32) -> np.ndarray:
        return self.gen.standard_normal(size=shape, dtype=np.float64).astype(dtype)

    def uniform(self, low=0.0, high=1.0, shape=()) -> np.ndarray:
        return self.gen.uniform(low, high, size=shape)

    def random(self) -> float:
        return float(self.gen.random())

    def integers(self, low: int, high: int, shape=None):
        """Uniform integers in [low, high)."""
        out = self.gen.integers(low, high, size=shape)
        return int(out) if shape is None else out

    def choice(self, seq):
        return seq[self.integers(0, len(seq))]

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in ascending order."""
        idx = self.gen.choice(n, size=k, replace=False)
        return sorted(int(i) for i in idx)

    def shuffled(self, seq) -> list:
        order = self.gen.permutation(len(seq))
        return [seq[int(i)] for i in order]


def sample_logit_normal(rng: SeededRng, shape=None) -> np.ndarray | float:
    """Draw t = sigmoid(z), z ~ N(0,1): the training-time distribution over t."""
    z = rng.gen.standard_normal(size=shape)
    t = 1.0 / (1.0 + np.exp(-z))
    return float(t) if shape is None else t.astype(np.float32)


def logit_normal_cdf(t):
    """CDF of sigmoid(Z), Z ~ N(0,1); used by distribution tests."""
    from scipy.stats import norm

    t = np.asarray(t, dtype=np.float64)
    return norm.cdf(np.log(t / (1.0 - t)))
