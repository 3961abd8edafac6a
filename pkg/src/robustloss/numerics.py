"""Numerically stable scalar/vector primitives and deterministic random streams.

All array code in this package works in 64-bit floats; the finite-difference
checks the test suite runs against every gradient need roughly 1e-6 relative
accuracy, which single precision cannot deliver.
"""
from __future__ import annotations

import numpy as np

# Probabilities are clamped into [PROB_CLAMP, 1 - PROB_CLAMP] before any log.
PROB_CLAMP = 1e-12


class RngStream:
    """Deterministic random stream identified by a (seed, stream key) pair.

    Two streams constructed from the same pair produce bit-identical draw
    sequences; streams with different keys never share state.  ``child``
    derives an independent sub-stream without advancing this one, which is
    how per-epoch, per-grid-point, and per-run streams are obtained from a
    single experiment seed.
    """

    def __init__(self, seed: int, key: int | tuple[int, ...] = ()):
        if isinstance(key, int):
            key = (key,)
        seed = int(seed)
        if seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed}")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key))
        )

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + key)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"


def log_sum_exp(v) -> float:
    """ln(sum_i exp(v_i)) computed with a max shift so nothing overflows."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    if not np.isfinite(v).all():
        raise ValueError("log_sum_exp requires finite entries")
    m = float(v.max())
    return m + float(np.log(np.exp(v - m).sum()))


def softmax(z, axis: int = -1) -> np.ndarray:
    """exp(z_i) / sum_j exp(z_j) along ``axis``, shift-invariant and overflow-safe.

    The output sums to 1 to within 1e-12 for finite inputs.  Entries can
    underflow to exactly 0.0 when the spread of z exceeds ~1400; callers that
    take logs afterwards must clamp (see ``clamp_probability``).
    """
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=axis, keepdims=True)


def clamp_probability(p):
    """Clamp a probability (scalar or array) into [1e-12, 1 - 1e-12]."""
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def sample_standard_normal(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. N(0, 1) draws from the stream; deterministic given the stream state."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return rng.generator.standard_normal(n)


def glorot_uniform(rng: RngStream, fan_in: int, fan_out: int) -> np.ndarray:
    """(fan_in, fan_out) matrix, i.i.d. uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got ({fan_in}, {fan_out})")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.generator.uniform(-limit, limit, size=(fan_in, fan_out))
