"""Oblivious permutation of shared rows and bucketed gradient sums.

Convention everywhere: applying permutation ``pi`` to ``x`` gives
``u[i] = x[pi[i]]``. Sorting a feature column ascending (stable) yields the
permutation that lines gradients up in feature order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .sharing import SharedVector, ShapeError
from .transport import ConfigurationError, ProtocolError


def sort_permutation(column: np.ndarray) -> np.ndarray:
    return np.argsort(np.asarray(column), kind="stable")


def apply_perm(x: np.ndarray, perm: np.ndarray) -> np.ndarray:
    return np.asarray(x)[..., perm]


def bucket_starts(n_samples: int, n_buckets: int) -> np.ndarray:
    """First sorted position of each bucket; the last bucket takes the remainder."""
    if n_buckets < 2:
        raise ConfigurationError("need at least two buckets")
    if n_buckets > n_samples:
        raise ConfigurationError(f"{n_buckets} buckets for only {n_samples} samples")
    return np.arange(n_buckets) * (n_samples // n_buckets)


def threshold_position(bucket: int, n_samples: int, n_buckets: int) -> int:
    """Sorted index whose value becomes the threshold when splitting after ``bucket``."""
    return (int(bucket) + 1) * (n_samples // n_buckets)


@dataclass
class BucketSums:
    alpha: SharedVector   # (rows, B) first-order sums
    beta: SharedVector    # (rows, B) second-order sums
    bucket_size: int


async def sec_perm(ctx, x: SharedVector, owners: Sequence[int],
                   perms: Mapping[int, np.ndarray] | None = None) -> SharedVector:
    """Permute each row of shared ``x`` by a permutation known only to that row's owner.

    ``x`` has shape (rows, N); ``owners[i]`` is the party holding row i's
    permutation, and ``perms`` maps the rows this party owns to permutations.
    Two rounds: owners broadcast the masked permutation, then the masked
    input goes to the owner.
    """
    perms = dict(perms or {})
    if x.values.ndim != 2:
        raise ShapeError("sec_perm expects a (rows, N) shared matrix")
    rows, length = x.shape
    owners = tuple(int(o) for o in owners)
    if len(owners) != rows:
        raise ShapeError(f"{len(owners)} owners for {rows} rows")
    mine = [i for i, o in enumerate(owners) if o == ctx.id]
    if set(perms) != set(mine):
        raise ProtocolError(f"party {ctx.id} holds permutations for rows {sorted(perms)}, owns {mine}")
    for i, p in perms.items():
        if np.shape(p) != (length,):
            raise ShapeError(f"row {i}: permutation length {np.shape(p)} != {length}")
    cr = ctx.take("perm-cr", (rows, length), owners=owners)

    with ctx.op("perm"):
        # round 1: pi_s = pi_p^-1 o pi, so pi(v) = pi_s(pi_p(v))
        masked = {}
        for i in mine:
            inv = np.empty(length, dtype=np.int64)
            inv[cr.perms[i]] = np.arange(length)
            masked[i] = inv[np.asarray(perms[i], dtype=np.int64)]
        payload = (np.concatenate([masked[i] for i in mine]).astype(np.uint64)
                   if mine else None)
        sends = {m: payload for m in ctx.others} if mine else {}
        senders = sorted(set(owners) - {ctx.id})
        got = await ctx.exchange(sends, senders, kind="index")
        pi_s = np.empty((rows, length), dtype=np.int64)
        cursor = {o: 0 for o in senders}
        for i, o in enumerate(owners):
            if o == ctx.id:
                pi_s[i] = masked[i]
            else:
                pi_s[i] = got[o][cursor[o]:cursor[o] + length].astype(np.int64)
                cursor[o] += length
        if np.any((pi_s < 0) | (pi_s >= length)):
            raise ProtocolError("received an invalid masked permutation")

        # round 2: x - r goes to each row's owner
        diff = x.values - cr.r
        sends = {}
        for o in set(owners) - {ctx.id}:
            sends[o] = diff[[i for i, oo in enumerate(owners) if oo == o]].ravel()
        got = await ctx.exchange(sends, ctx.others if mine else [],
                                 local=diff[mine].ravel() if mine else None)

    out = np.take_along_axis(cr.permuted_r, pi_s, axis=1)
    if mine:
        opened = diff[mine] + np.sum([got[m].reshape(len(mine), length) for m in got],
                                     axis=0, dtype=np.uint64)
        for k, i in enumerate(mine):
            out[i] += opened[k][np.asarray(perms[i], dtype=np.int64)]
    return SharedVector(ctx.id, out, x.scale, ctx.tag)


def bucket_sum(x: SharedVector, n_buckets: int) -> SharedVector:
    """Local sums of consecutive runs along the last axis."""
    starts = bucket_starts(x.shape[-1], n_buckets)
    return x._like(np.add.reduceat(x.values, starts, axis=-1, dtype=np.uint64))


async def sec_disc(ctx, g: SharedVector, h: SharedVector, owners: Sequence[int],
                   perms: Mapping[int, np.ndarray] | None, n_buckets: int) -> BucketSums:
    """Permute g and h rows by the owners' sort orders and sum them into buckets.

    Both vectors use the same permutation but independent masking material.
    """
    if g.shape != h.shape:
        raise ShapeError("g and h must have the same shape")
    rows, length = g.shape
    bucket_starts(length, n_buckets)
    perms = dict(perms or {})
    with ctx.op("disc"):
        both = g._like(np.concatenate([g.values, h.values]))
        both_perms = {**perms, **{i + rows: p for i, p in perms.items()}}
        permuted = await sec_perm(ctx, both, tuple(owners) * 2, both_perms)
    sums = bucket_sum(permuted, n_buckets)
    return BucketSums(sums[:rows].with_scale(g.scale), sums[rows:].with_scale(h.scale),
                      length // n_buckets)
