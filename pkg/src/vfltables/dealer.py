"""Trusted offline dealer of correlated randomness.

All material is a deterministic function of ``(seed, kind, session_tag,
index)``: every party can pull its own slice independently and the
reconstructed values always agree. The dealer never takes part online.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ring import signed_sum_with_wraps, to_signed

KINDS = ("arith-triple", "bool-triple", "trunc-pair", "perm-cr")

# r is drawn from [-2^62, 2^62): z + r then never leaves the signed range for
# |z| < 2^62, so the opened p never wraps relative to z.
TRUNC_MASK_BITS = 62


class DealerError(RuntimeError):
    pass


@dataclass
class BeaverTriple:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


@dataclass
class BooleanTriple:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


@dataclass
class TruncationPair:
    r: np.ndarray
    theta_r: np.ndarray
    r_shifted: np.ndarray  # shares of floor(r / 2^bits)
    bits: int


@dataclass
class PermutationCR:
    r: np.ndarray            # (rows, N) shares of r
    permuted_r: np.ndarray   # (rows, N) shares of pi_p(r)
    perms: dict[int, np.ndarray]  # row -> pi_p, only for rows this party owns
    owners: tuple[int, ...]


def random_words(rng: np.random.Generator, shape) -> np.ndarray:
    size = int(np.prod(shape, dtype=np.int64))
    return rng.bit_generator.random_raw(size).astype(np.uint64, copy=False).reshape(shape)


def additive_split(rng: np.random.Generator, x: np.ndarray, n: int) -> list[np.ndarray]:
    x = np.asarray(x, dtype=np.uint64)
    parts = [random_words(rng, x.shape) for _ in range(n - 1)]
    last = x.copy()
    for p in parts:
        last -= p
    return parts + [last]


def xor_split(rng: np.random.Generator, x: np.ndarray, n: int) -> list[np.ndarray]:
    x = np.asarray(x, dtype=np.uint64)
    parts = [random_words(rng, x.shape) for _ in range(n - 1)]
    last = x.copy()
    for p in parts:
        last ^= p
    return parts + [last]


def _as_shape(shape) -> tuple[int, ...]:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


def _tag_int(tag: bytes) -> int:
    return int.from_bytes(tag.ljust(8, b"\0")[:8], "little")


class Dealer:
    def __init__(self, n: int, seed: int = 0):
        if n < 2:
            raise ValueError("need at least two parties")
        self.n = n
        self.seed = int(seed)
        self._cache: dict[tuple, list] = {}
        self._remaining: dict[tuple, set] = {}
        self._lock = threading.Lock()

    def _rng(self, kind: str, tag: bytes, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, KINDS.index(kind), _tag_int(tag), index])

    def deal(self, kind: str, session_tag: bytes, index: int, shape=(), *, bits: int = 20,
             owners: Sequence[int] = ()) -> list:
        """All ``n`` parties' material for one (kind, session, index); index-th draw of the stream."""
        if kind not in KINDS:
            raise DealerError(f"unknown material kind {kind!r}")
        rng = self._rng(kind, session_tag, index)
        n = self.n
        shape = _as_shape(shape)
        if kind == "arith-triple":
            a, b = random_words(rng, shape), random_words(rng, shape)
            c = a * b
            parts = [additive_split(rng, v, n) for v in (a, b, c)]
            return [BeaverTriple(*(p[m] for p in parts)) for m in range(n)]
        if kind == "bool-triple":
            x, y = random_words(rng, shape), random_words(rng, shape)
            parts = [xor_split(rng, v, n) for v in (x, y, x & y)]
            return [BooleanTriple(*(p[m] for p in parts)) for m in range(n)]
        if kind == "trunc-pair":
            r = (to_signed(random_words(rng, shape) >> np.uint64(64 - TRUNC_MASK_BITS - 1))
                 - np.int64(1 << TRUNC_MASK_BITS))
            r_sh = additive_split(rng, r.view(np.uint64), n)
            _, theta = signed_sum_with_wraps(r_sh)
            th_sh = additive_split(rng, theta.view(np.uint64), n)
            rs_sh = additive_split(rng, (r >> np.int64(bits)).view(np.uint64), n)
            return [TruncationPair(r_sh[m], th_sh[m], rs_sh[m], bits) for m in range(n)]
        # perm-cr
        if len(shape) != 2:
            raise DealerError("perm-cr needs a (rows, length) shape")
        rows, length = shape
        owners = tuple(int(o) for o in owners)
        if len(owners) != rows or any(not 1 <= o <= n for o in owners):
            raise DealerError("perm-cr needs one valid owner party per row")
        perms = rng.permuted(np.tile(np.arange(length, dtype=np.int64), (rows, 1)), axis=1)
        r = random_words(rng, (rows, length))
        pr = np.take_along_axis(r, perms, axis=1)
        r_sh, pr_sh = additive_split(rng, r, n), additive_split(rng, pr, n)
        out = []
        for m in range(1, n + 1):
            mine = {i: perms[i] for i, o in enumerate(owners) if o == m}
            out.append(PermutationCR(r_sh[m - 1], pr_sh[m - 1], mine, owners))
        return out

    def take(self, party: int, kind: str, session_tag: bytes, index: int, shape=(), **kw):
        """One party's slice; the full draw is cached until all parties have taken it."""
        key = (kind, session_tag, index)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = self.deal(kind, session_tag, index, shape, **kw)
                self._remaining[key] = set(range(1, self.n + 1))
            material = self._cache[key][party - 1]
            self._remaining[key].discard(party)
            if not self._remaining[key]:
                del self._cache[key], self._remaining[key]
        return material
