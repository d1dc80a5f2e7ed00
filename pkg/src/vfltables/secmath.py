"""Nonlinear functions on shares: reciprocal, division, exp, sigmoid, comparison, argmin."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import sharing as S
from .ring import encode
from .sharing import SharedVector, ShapeError

TOP_BIT = np.uint64(63)


@dataclass(frozen=True)
class ApproxConfig:
    newton_iters: int = 20
    newton_init_log2: int = 10   # z_0 = 2^-newton_init_log2
    exp_log_rounds: int = 2      # exp(x) ~ (1 + x/2^n)^(2^n)
    sigmoid_clamp: float = 4.0   # 0 disables the clamp

    def __post_init__(self):
        if self.newton_iters < 1:
            raise ValueError("newton_iters must be >= 1")
        if self.exp_log_rounds < 1:
            raise ValueError("exp_log_rounds must be >= 1")
        if self.sigmoid_clamp < 0:
            raise ValueError("sigmoid_clamp must be >= 0")

    @classmethod
    def paper_faithful(cls) -> "ApproxConfig":
        return cls(newton_init_log2=20, sigmoid_clamp=0.0)

    def with_init(self, init_log2: int) -> "ApproxConfig":
        return replace(self, newton_init_log2=int(init_log2))


DEFAULT_APPROX = ApproxConfig()


def _cfg(ctx, cfg):
    return cfg or ctx.approx or DEFAULT_APPROX


async def sec_reciprocal(ctx, y: SharedVector, cfg: ApproxConfig | None = None) -> SharedVector:
    """Newton iteration z <- 2z - y*z^2 from z_0 = 2^-init; converges for 0 < y*z_0 < 2."""
    cfg = _cfg(ctx, cfg)
    with ctx.op("reciprocal"):
        z = S.public(ctx, np.full(y.shape, encode(2.0 ** -cfg.newton_init_log2, ctx.fxp), dtype=np.uint64))
        for _ in range(cfg.newton_iters):
            t = await S.mul(ctx, y, z)
            u = await S.mul(ctx, t, z)
            z = z.mul_public_int(2) - u
    return z


async def sec_div(ctx, x: SharedVector, y: SharedVector, cfg: ApproxConfig | None = None) -> SharedVector:
    with ctx.op("div"):
        inv = await sec_reciprocal(ctx, y, cfg)
        return await S.mul(ctx, x, inv)


async def sec_exp(ctx, x: SharedVector, cfg: ApproxConfig | None = None) -> SharedVector:
    """(1 + x/2^n)^(2^n): one rescaling, then n squarings (n multiplication rounds)."""
    cfg = _cfg(ctx, cfg)
    n = cfg.exp_log_rounds
    with ctx.op("exp"):
        a = await S.truncate(ctx, x.with_scale(2), bits=n)
        a = a.with_scale(x.scale).add_public(encode(1.0, ctx.fxp))
        for _ in range(n):
            a = await S.mul(ctx, a, a)
    return a


async def sec_sigmoid(ctx, x: SharedVector, cfg: ApproxConfig | None = None) -> SharedVector:
    """1 / (1 + exp(-x)), optionally after an oblivious clamp of x to [-c, c]."""
    cfg = _cfg(ctx, cfg)
    with ctx.op("sigmoid"):
        if cfg.sigmoid_clamp > 0:
            c = encode(cfg.sigmoid_clamp, ctx.fxp)
            hi = S.public(ctx, np.full(x.shape, c, dtype=np.uint64))
            lo = -hi
            flags = await sec_less(ctx, S.concat([x, hi]), S.concat([lo, x]))
            below, above = S.split_like(flags, [x, x])
            fix_lo, fix_hi = await S.mul_many(ctx, [(below, lo - x), (above, hi - x)])
            x = x + fix_lo + fix_hi
        e = await sec_exp(ctx, -x, cfg)
        return await sec_reciprocal(ctx, e.add_public(encode(1.0, ctx.fxp)), cfg)


# -- comparison -------------------------------------------------------------

async def _compress(ctx, addends: list[np.ndarray]) -> list[np.ndarray]:
    """Carry-save 3->2 layers until two XOR-shared addends remain (one AND round per layer)."""
    while len(addends) > 2:
        groups = [addends[i:i + 3] for i in range(0, len(addends) - len(addends) % 3, 3)]
        rest = addends[len(groups) * 3:]
        ands = await S.and_many(ctx, [(a ^ c, b ^ c) for a, b, c in groups])
        nxt = []
        for (a, b, c), m in zip(groups, ands):
            nxt.append(a ^ b ^ c)
            nxt.append((m ^ c) << np.uint64(1))
        addends = nxt + rest
    return addends


async def _msb_of_sum(ctx, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """XOR-shared top bit of a + b (Kogge-Stone prefix carries)."""
    p0 = a ^ b
    (g,) = await S.and_many(ctx, [(a, b)])
    p = p0
    shifts = [1, 2, 4, 8, 16, 32]
    for i, k in enumerate(shifts):
        sk = np.uint64(k)
        if i == len(shifts) - 1:
            (gg,) = await S.and_many(ctx, [(p, g << sk)])
            g = g ^ gg
        else:
            gg, p = await S.and_many(ctx, [(p, g << sk), (p, p << sk)])
            g = g ^ gg
    return ((p0 ^ (g << np.uint64(1))) >> TOP_BIT) & np.uint64(1)


async def _bits_to_arith(ctx, bit: np.ndarray) -> SharedVector:
    """Convert an XOR-shared bit into an additive (raw) sharing by folding x^y = x+y-2xy."""
    terms = []
    for m in range(1, ctx.n + 1):
        terms.append(S.SharedVector(ctx.id, bit if m == ctx.id else np.zeros_like(bit), 0, ctx.tag))
    while len(terms) > 1:
        pairs = [(terms[i], terms[i + 1]) for i in range(0, len(terms) - 1, 2)]
        prods = await S.mul_many(ctx, pairs)
        nxt = [x + y - xy.mul_public_int(2) for (x, y), xy in zip(pairs, prods)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


async def sec_less(ctx, a: SharedVector, b: SharedVector) -> SharedVector:
    """Raw 0/1 sharing of [a < b] for signed values with |a - b| < 2^63."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    with ctx.op("less"):
        d = (a.with_scale(0) - b.with_scale(0)).values.ravel()
        zero = np.zeros_like(d)
        addends = [d if m == ctx.id else zero for m in range(1, ctx.n + 1)]
        x, y = await _compress(ctx, addends)
        bit = await _msb_of_sum(ctx, x, y)
        out = await _bits_to_arith(ctx, bit)
    return out.reshape(a.shape)


async def sec_argmin(ctx, v: SharedVector) -> np.ndarray:
    """Public index of the minimum along the last axis, first index on ties.

    Rows (all leading axes) are scanned in parallel; only the indices are opened.
    """
    if v.shape[-1] < 1:
        raise ShapeError("argmin of an empty vector")
    with ctx.op("argmin"):
        best = v[..., 0]
        idx = S.zeros(ctx, best.shape, scale=0)
        for i in range(1, v.shape[-1]):
            cur = v[..., i]
            b = await sec_less(ctx, cur, best)
            pos = S.public(ctx, np.full(best.shape, i, dtype=np.uint64), scale=0)
            d_best, d_idx = await S.mul_many(ctx, [(b, cur - best), (b, pos - idx)])
            best = best + d_best
            idx = idx + d_idx
        out = await S.open_(ctx, idx)
    return out.view(np.int64)
