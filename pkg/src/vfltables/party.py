"""Per-party protocol context: identity, transport endpoint, dealer stream, PRNG."""

from __future__ import annotations

import hashlib
from collections import Counter
from contextlib import contextmanager
from typing import Any, Awaitable, Callable, Iterable

import numpy as np

from .dealer import Dealer
from .ring import DEFAULT_FXP, FixedPointConfig
from .transport import Frame, Network, run_parties

AP, PP = "AP", "PP"


def session_tag(name: str | bytes) -> bytes:
    if isinstance(name, bytes) and len(name) == 8:
        return name
    raw = name.encode() if isinstance(name, str) else bytes(name)
    return hashlib.blake2b(raw, digest_size=8).digest()


class PartyContext:
    """One party's view of a protocol session.

    Protocols are written SPMD-style: every party runs the same coroutine and
    control flow depends only on public values, so round counters and dealer
    indices stay aligned without coordination.
    """

    def __init__(self, pid: int, network: Network, dealer: Dealer, *, session: str | bytes = "main",
                 seed: int = 0, fxp: FixedPointConfig = DEFAULT_FXP, approx: Any = None,
                 trunc_method: str = "exact", role: str | None = None, data: Any = None):
        network.check_endpoint(pid)
        if trunc_method not in ("exact", "wrap"):
            raise ValueError(f"unknown truncation method {trunc_method!r}")
        self.id = pid
        self.n = network.n
        self.net = network
        self.dealer = dealer
        self.tag = session_tag(session)
        self.seed = seed
        self.fxp = fxp
        self.approx = approx
        self.trunc_method = trunc_method
        self.role = role
        self.data = data
        self.round = 0
        self._seq: Counter = Counter()
        self._ops: list[str] = []
        self.rng = np.random.default_rng([seed, pid, int.from_bytes(self.tag, "little")])

    def __repr__(self):
        return f"PartyContext(id={self.id}, n={self.n}, tag={self.tag.hex()}, round={self.round})"

    @property
    def others(self) -> list[int]:
        return [m for m in range(1, self.n + 1) if m != self.id]

    @contextmanager
    def op(self, label: str):
        self._ops.append(label)
        try:
            yield
        finally:
            self._ops.pop()

    def take(self, kind: str, shape=(), **kw):
        idx = self._seq[kind]
        self._seq[kind] += 1
        return self.dealer.take(self.id, kind, self.tag, idx, shape, **kw)

    async def exchange(self, sends: dict[int, np.ndarray], expect: Iterable[int], *,
                       kind: str = "ring", local: np.ndarray | None = None) -> dict[int, np.ndarray]:
        """One communication round: post ``sends``, then wait for a frame from each of ``expect``.

        ``local`` is this party's own contribution to an opening; it is only
        written to the audit log so reconstructed values can be scanned.
        """
        self.round += 1
        rnd = self.round
        ops = tuple(self._ops)
        for dst, payload in sends.items():
            self.net.post(Frame(self.id, dst, self.tag, rnd, payload, ops, kind))
        if local is not None and self.net.audit:
            self.net.note_local(Frame(self.id, self.id, self.tag, rnd, np.array(local, copy=True), ops, kind))
        got = {}
        for src in expect:
            got[src] = (await self.net.fetch(self.id, src, self.tag, rnd)).payload
        return got


def simulate(n: int, program: Callable[[PartyContext], Awaitable[Any]], *, seed: int = 0,
             session: str | bytes = "main", network: Network | None = None, dealer: Dealer | None = None,
             **ctx_kw) -> tuple[list[Any], Network]:
    """Run ``program(ctx)`` once per party on a fresh (or given) network; returns results and network."""
    net = network or Network(n)
    dealer = dealer or Dealer(n, seed)
    ctxs = [PartyContext(m, net, dealer, session=session, seed=seed, **ctx_kw) for m in range(1, n + 1)]
    results = run_parties(net, [lambda c=c: program(c) for c in ctxs])
    return results, net
