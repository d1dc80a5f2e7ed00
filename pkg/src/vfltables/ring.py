"""Arithmetic in Z_2^64 and fixed-point embedding of reals.

Ring elements are stored as ``numpy.uint64``; numpy wraps silently on
overflow for array arithmetic, which is exactly mod-2^64 semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RING_BITS = 64
RING_MODULUS = 1 << RING_BITS
_MASK = RING_MODULUS - 1


class RangeError(ValueError):
    """A real value does not fit in the fixed-point range."""


@dataclass(frozen=True)
class FixedPointConfig:
    precision_bits: int = 20
    ring_bits: int = RING_BITS

    def __post_init__(self):
        if self.ring_bits != RING_BITS:
            raise ValueError("only the 64-bit ring is supported")
        if not 0 < self.precision_bits < self.ring_bits:
            raise ValueError(f"precision_bits must be in (0, {self.ring_bits})")

    @property
    def scale(self) -> int:
        return 1 << self.precision_bits

    @property
    def max_abs(self) -> float:
        return float(2 ** (self.ring_bits - self.precision_bits - 1))


DEFAULT_FXP = FixedPointConfig()


def as_ring(x) -> np.ndarray:
    """Coerce Python ints (any sign/size) or integer arrays into uint64 ring elements."""
    if isinstance(x, np.ndarray):
        if x.dtype == np.uint64:
            return x
        if x.dtype == np.int64:
            return x.view(np.uint64)
        if x.dtype.kind in "iu":
            return x.astype(np.int64).view(np.uint64)
        if x.dtype == object:
            return np.array([int(v) & _MASK for v in x.ravel()], dtype=np.uint64).reshape(x.shape)
        raise TypeError(f"cannot interpret dtype {x.dtype} as ring elements")
    if isinstance(x, (int, np.integer)):
        return np.uint64(int(x) & _MASK)
    return as_ring(np.array([int(v) & _MASK for v in x], dtype=np.uint64))


def to_signed(x) -> np.ndarray:
    """Two's-complement view of ring elements."""
    return np.asarray(x, dtype=np.uint64).view(np.int64)


def encode(x, cfg: FixedPointConfig = DEFAULT_FXP) -> np.ndarray:
    """Embed reals as ``round(x * 2^l) mod 2^64``, rounding half away from zero."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise RangeError("cannot encode non-finite values")
    if arr.size and np.max(np.abs(arr)) >= cfg.max_abs:
        raise RangeError(f"|x| must be below 2^{cfg.ring_bits - cfg.precision_bits - 1}")
    scaled = np.abs(arr) * cfg.scale
    mag = np.floor(scaled + 0.5)
    raw = (np.sign(arr) * mag).astype(np.int64)
    out = raw.view(np.uint64)
    return out if out.ndim else np.uint64(out)


def decode(v, cfg: FixedPointConfig = DEFAULT_FXP) -> np.ndarray:
    """Interpret ring elements as signed fixed-point numbers."""
    signed = to_signed(np.asarray(v, dtype=np.uint64))
    out = signed.astype(np.float64) / cfg.scale
    return out if out.ndim else float(out)


def add(a, b):
    return np.add(np.asarray(a, np.uint64), np.asarray(b, np.uint64), dtype=np.uint64)


def sub(a, b):
    return np.subtract(np.asarray(a, np.uint64), np.asarray(b, np.uint64), dtype=np.uint64)


def neg(a):
    return np.subtract(np.uint64(0), np.asarray(a, np.uint64), dtype=np.uint64)


def mul(a, b):
    """Ring product. Two scaled operands give a result at scale 2^(2l)."""
    return np.multiply(np.asarray(a, np.uint64), np.asarray(b, np.uint64), dtype=np.uint64)


def signed_add_with_carry(a: np.ndarray, b: np.ndarray):
    """Add int64 arrays, returning the wrapped sum and the overflow count in {-1, 0, 1}.

    The exact integer sum equals ``wrapped + carry * 2^64``.
    """
    s = (a.view(np.uint64) + b.view(np.uint64)).view(np.int64)
    up = (a >= 0) & (b >= 0) & (s < 0)
    down = (a < 0) & (b < 0) & (s >= 0)
    return s, up.astype(np.int64) - down.astype(np.int64)


def signed_sum_with_wraps(shares) -> tuple[np.ndarray, np.ndarray]:
    """Sum signed shares exactly: returns (value in int64 range, wrap count).

    ``sum(shares) == value + wraps * 2^64`` over the integers.
    """
    it = iter(shares)
    acc = to_signed(next(it)).copy()
    wraps = np.zeros(acc.shape, dtype=np.int64)
    for s in it:
        acc, c = signed_add_with_carry(acc, to_signed(s))
        wraps += c
    return acc, wraps
