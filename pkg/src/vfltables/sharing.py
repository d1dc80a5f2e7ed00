"""Additive secret sharing over Z_2^64 and the online protocols built on it.

A :class:`SharedVector` is one party's additive share of an array. Local
operations (add, subtract, multiply by a public integer) return new shares
without communication. The ``async`` functions are protocol steps: every
party calls them with the same public arguments and they exchange frames
through the party's :class:`~vfltables.party.PartyContext`.

``scale`` counts how many factors of ``2^l`` a value carries: 0 for raw
integers and indicators, 1 for fixed-point values, 2 for the raw product of
two fixed-point values (which must be truncated before further use).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dealer import random_words
from .ring import encode, signed_add_with_carry, signed_sum_with_wraps, to_signed
from .transport import ConfigurationError, ProtocolError


class ShapeError(ValueError):
    pass


@dataclass
class SharedVector:
    party_id: int
    values: np.ndarray
    scale: int = 1
    session_tag: bytes = b""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint64)

    @property
    def scaled(self) -> bool:
        return self.scale > 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def __len__(self):
        return len(self.values)

    def _like(self, values, scale=None) -> "SharedVector":
        return SharedVector(self.party_id, values, self.scale if scale is None else scale, self.session_tag)

    def _check(self, other: "SharedVector"):
        if not isinstance(other, SharedVector):
            raise TypeError("expected a SharedVector")
        if other.party_id != self.party_id:
            raise ProtocolError("mixing shares of different parties")
        if other.scale != self.scale:
            raise ShapeError(f"scale mismatch: {self.scale} vs {other.scale}")
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}") from None

    def __add__(self, other: "SharedVector") -> "SharedVector":
        self._check(other)
        return self._like(self.values + other.values)

    def __sub__(self, other: "SharedVector") -> "SharedVector":
        self._check(other)
        return self._like(self.values - other.values)

    def __neg__(self) -> "SharedVector":
        return self._like(np.uint64(0) - self.values)

    def mul_public_int(self, c) -> "SharedVector":
        """Multiply by a public integer (array) without changing the scale."""
        c = np.asarray(c)
        if c.dtype == np.uint64:
            words = c
        elif c.dtype.kind in "iu":
            words = c.astype(np.int64).view(np.uint64)
        else:
            words = np.asarray(c, dtype=object).astype(np.int64).view(np.uint64)
        return self._like(self.values * words)

    def add_public(self, words) -> "SharedVector":
        """Add public ring words (already at this vector's scale); only P_1 adds them."""
        if self.party_id != 1:
            return self._like(self.values.copy())
        return self._like(self.values + np.asarray(words, dtype=np.uint64))

    def __getitem__(self, idx) -> "SharedVector":
        return self._like(self.values[idx])

    def reshape(self, *shape) -> "SharedVector":
        return self._like(self.values.reshape(*shape))

    def sum(self, axis=None) -> "SharedVector":
        return self._like(np.sum(self.values, axis=axis, dtype=np.uint64))

    def cumsum(self, axis=-1) -> "SharedVector":
        return self._like(np.cumsum(self.values, axis=axis, dtype=np.uint64))

    def with_scale(self, scale: int) -> "SharedVector":
        return self._like(self.values, scale)


def zeros(ctx, shape, scale: int = 1) -> SharedVector:
    return SharedVector(ctx.id, np.zeros(shape, dtype=np.uint64), scale, ctx.tag)


def public(ctx, words, scale: int = 1) -> SharedVector:
    """A trivial sharing of public ring words: P_1 holds them, everyone else holds 0."""
    words = np.asarray(words, dtype=np.uint64)
    return zeros(ctx, words.shape, scale).add_public(words)


def concat(parts: Sequence[SharedVector]) -> SharedVector:
    """Flatten and concatenate shares (all at the same scale) for batching."""
    first = parts[0]
    if any(p.scale != first.scale for p in parts):
        raise ShapeError("cannot concatenate shares at different scales")
    return first._like(np.concatenate([p.values.ravel() for p in parts]))


def split_like(flat: SharedVector, templates: Sequence) -> list[SharedVector]:
    """Inverse of :func:`concat`; ``templates`` supplies the shapes."""
    out, pos = [], 0
    for t in templates:
        shape = t.shape if hasattr(t, "shape") else tuple(t)
        size = int(np.prod(shape, dtype=np.int64))
        out.append(flat._like(flat.values[pos:pos + size].reshape(shape)))
        pos += size
    return out


# -- dealer-free sharing (pure functions) ---------------------------------

def share(x, n: int, rng: np.random.Generator, *, scale: int = 1, session_tag: bytes = b"") -> list[SharedVector]:
    """Split ring words ``x`` into ``n`` additive shares; the first n-1 are uniform."""
    if n < 2:
        raise ConfigurationError("sharing needs at least two parties")
    x = np.asarray(x, dtype=np.uint64)
    parts = [random_words(rng, x.shape) for _ in range(n - 1)]
    last = x - np.sum(parts, axis=0, dtype=np.uint64) if parts else x.copy()
    return [SharedVector(m + 1, v, scale, session_tag) for m, v in enumerate(parts + [last])]


def reconstruct(shares: Sequence[SharedVector], n: int | None = None) -> np.ndarray:
    """Modular sum of all parties' shares of one secret."""
    if not shares:
        raise ProtocolError("no shares to reconstruct")
    n = len(shares) if n is None else n
    ids = sorted(s.party_id for s in shares)
    if ids != list(range(1, n + 1)):
        raise ProtocolError(f"missing shares: have parties {ids}, need 1..{n}")
    tags = {s.session_tag for s in shares}
    if len(tags) != 1:
        raise ProtocolError("session tag mismatch between shares")
    if len({s.shape for s in shares}) != 1:
        raise ShapeError("shares disagree on shape")
    return np.sum([s.values for s in shares], axis=0, dtype=np.uint64)


# -- online protocols -----------------------------------------------------

async def input_share_many(ctx, items: Sequence[tuple]) -> list[SharedVector]:
    """Secret-share several private inputs in one round.

    ``items`` is a list of ``(owner, words_or_None, shape, scale)``; the
    owner passes its ring words, everyone else passes ``None``.
    """
    sends: dict[int, list] = {m: [] for m in ctx.others}
    mine: dict[int, np.ndarray] = {}
    for k, (owner, words, shape, scale) in enumerate(items):
        ctx.net.check_endpoint(owner)
        if owner != ctx.id:
            continue
        if words is None:
            raise ProtocolError(f"party {ctx.id} owns input {k} but supplied no value")
        words = np.asarray(words, dtype=np.uint64)
        if words.shape != tuple(shape):
            raise ShapeError(f"input {k}: shape {words.shape} != declared {tuple(shape)}")
        parts = [random_words(ctx.rng, words.shape) for _ in ctx.others]
        for m, p in zip(ctx.others, parts):
            sends[m].append(p.ravel())
        mine[k] = words - np.sum(parts, axis=0, dtype=np.uint64)
    owners = sorted({int(it[0]) for it in items} - {ctx.id})
    payloads = {m: np.concatenate(v) if v else np.zeros(0, np.uint64) for m, v in sends.items()
                if v}
    got = await ctx.exchange(payloads, owners)
    pos = {o: 0 for o in owners}
    out = []
    for k, (owner, _w, shape, scale) in enumerate(items):
        shape = tuple(shape)
        if owner == ctx.id:
            vals = mine[k]
        else:
            size = int(np.prod(shape, dtype=np.int64))
            vals = got[owner][pos[owner]:pos[owner] + size].reshape(shape)
            pos[owner] += size
        out.append(SharedVector(ctx.id, vals, scale, ctx.tag))
    return out


async def input_share(ctx, owner: int, words, shape, scale: int = 1) -> SharedVector:
    return (await input_share_many(ctx, [(owner, words, shape, scale)]))[0]


async def open_many(ctx, xs: Sequence[SharedVector]) -> list[np.ndarray]:
    """Reconstruct several shared values to every party in one round."""
    flat = concat(xs).values if xs else np.zeros(0, np.uint64)
    got = await ctx.exchange({m: flat for m in ctx.others}, ctx.others, local=flat)
    total = flat + np.sum(list(got.values()), axis=0, dtype=np.uint64)
    return [v.values for v in split_like(SharedVector(ctx.id, total, 0, ctx.tag), xs)]


async def open_(ctx, x: SharedVector) -> np.ndarray:
    return (await open_many(ctx, [x]))[0]


async def reveal(ctx, x: SharedVector, to: int | Sequence[int]) -> np.ndarray | None:
    """Reconstruct ``x`` only at the target party (or parties); others get ``None``."""
    targets = sorted({to} if isinstance(to, (int, np.integer)) else {int(t) for t in to})
    for t in targets:
        ctx.net.check_endpoint(t)
    sends = {t: x.values for t in targets if t != ctx.id}
    expect = ctx.others if ctx.id in targets else []
    got = await ctx.exchange(sends, expect, local=x.values if ctx.id in targets else None)
    if ctx.id not in targets:
        return None
    return x.values + np.sum(list(got.values()), axis=0, dtype=np.uint64)


async def mul_many(ctx, pairs: Sequence[tuple[SharedVector, SharedVector]]) -> list[SharedVector]:
    """Elementwise Beaver products of several pairs in a single round, no truncation.

    The result scale is the sum of the operand scales.
    """
    if not pairs:
        return []
    xs = [np.broadcast_arrays(x.values, y.values) for x, y in pairs]
    shapes = [a.shape for a, _ in xs]
    xf = np.concatenate([a.ravel() for a, _ in xs])
    yf = np.concatenate([b.ravel() for _, b in xs])
    t = ctx.take("arith-triple", xf.shape)
    with ctx.op("mul"):
        e_m, f_m = xf - t.a, yf - t.b
        both = np.concatenate([e_m, f_m])
        got = await ctx.exchange({m: both for m in ctx.others}, ctx.others, local=both)
    opened = both + np.sum(list(got.values()), axis=0, dtype=np.uint64)
    e, f = opened[:xf.size], opened[xf.size:]
    z = t.c + e * t.b + f * t.a
    if ctx.id == 1:
        z = z + e * f
    out, pos = [], 0
    for (x, y), shape in zip(pairs, shapes):
        size = int(np.prod(shape, dtype=np.int64))
        out.append(SharedVector(ctx.id, z[pos:pos + size].reshape(shape), x.scale + y.scale, ctx.tag))
        pos += size
    return out


async def beaver_mul(ctx, x: SharedVector, y: SharedVector) -> SharedVector:
    return (await mul_many(ctx, [(x, y)]))[0]


async def truncate_many(ctx, zs: Sequence[SharedVector], bits: int | None = None) -> list[SharedVector]:
    """Divide shared values by ``2^bits`` (default ``l``) in one round.

    Two methods, chosen by ``ctx.trunc_method``:

    ``"exact"``
        P_1 opens ``p = z + r``; the dealer also shares ``floor(r / 2^bits)``.
        The result is ``floor(z / 2^bits)`` or one more (stochastic rounding).
    ``"wrap"``
        Wrap-count correction: each share is shifted locally and the shared
        wrap count ``theta_z = theta_p + beta_zr - theta_r`` removes the
        overflow term. Per-share flooring leaves an error in ``(-n, 0]`` units.

    Both need ``|z| < 2^62`` so that ``z + r`` cannot leave the signed range.
    """
    if not zs:
        return []
    bits = ctx.fxp.precision_bits if bits is None else int(bits)
    flat = concat([z.with_scale(0) for z in zs]).values
    pair = ctx.take("trunc-pair", flat.shape, bits=bits)
    with ctx.op("trunc"):
        p_m = flat + pair.r
        sends = {1: p_m} if ctx.id != 1 else {}
        got = await ctx.exchange(sends, ctx.others if ctx.id == 1 else [], local=p_m if ctx.id == 1 else None)
    sh = np.int64(bits)
    if ctx.trunc_method == "exact":
        if ctx.id == 1:
            p = p_m + np.sum(list(got.values()), axis=0, dtype=np.uint64)
            out = (to_signed(p) >> sh).view(np.uint64) - pair.r_shifted
        else:
            out = np.uint64(0) - pair.r_shifted
    else:
        _, beta = signed_add_with_carry(to_signed(flat), to_signed(pair.r))
        theta = beta.view(np.uint64) - pair.theta_r
        if ctx.id == 1:
            _, theta_p = signed_sum_with_wraps([p_m, *got.values()])
            theta = theta + theta_p.view(np.uint64)
        out = (to_signed(flat) >> sh).view(np.uint64) - theta * np.uint64((1 << (64 - bits)) % (1 << 64))
    res = split_like(SharedVector(ctx.id, out, 0, ctx.tag), zs)
    return [r.with_scale(max(z.scale - 1, 0)) for r, z in zip(res, zs)]


async def truncate(ctx, z: SharedVector, bits: int | None = None) -> SharedVector:
    return (await truncate_many(ctx, [z], bits))[0]


async def mul_trunc_many(ctx, pairs: Sequence[tuple[SharedVector, SharedVector]]) -> list[SharedVector]:
    """Products followed by truncation wherever both operands were fixed-point."""
    prods = await mul_many(ctx, pairs)
    need = [i for i, p in enumerate(prods) if p.scale >= 2]
    if need:
        fixed = await truncate_many(ctx, [prods[i] for i in need])
        for i, f in zip(need, fixed):
            prods[i] = f
    return prods


async def mul(ctx, x: SharedVector, y: SharedVector) -> SharedVector:
    return (await mul_trunc_many(ctx, [(x, y)]))[0]


async def mul_const(ctx, x: SharedVector, c) -> SharedVector:
    """Multiply by a public real constant: local product with encode(c), then truncate."""
    prod = x.mul_public_int(np.asarray(encode(c, ctx.fxp), dtype=np.uint64))
    return await truncate(ctx, prod.with_scale(x.scale + 1))


async def and_many(ctx, pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    """Bitwise AND of XOR-shared 64-bit words, all pairs in one round."""
    if not pairs:
        return []
    shapes = [np.shape(a) for a, _ in pairs]
    xf = np.concatenate([np.asarray(a, np.uint64).ravel() for a, _ in pairs])
    yf = np.concatenate([np.asarray(b, np.uint64).ravel() for _, b in pairs])
    t = ctx.take("bool-triple", xf.shape)
    with ctx.op("and"):
        both = np.concatenate([xf ^ t.x, yf ^ t.y])
        got = await ctx.exchange({m: both for m in ctx.others}, ctx.others, local=both)
    opened = both.copy()
    for v in got.values():
        opened ^= v
    d, e = opened[:xf.size], opened[xf.size:]
    z = t.z ^ (d & t.y) ^ (e & t.x)
    if ctx.id == 1:
        z ^= d & e
    out, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape, dtype=np.int64))
        out.append(z[pos:pos + size].reshape(shape))
        pos += size
    return out
