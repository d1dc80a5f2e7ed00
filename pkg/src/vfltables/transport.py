"""In-process message transport between simulated parties.

Every protocol step is a *round*: each party sends zero or more frames and
then blocks until the frames it expects for that ``(session, round)`` have
arrived. Mailboxes are keyed by ``(receiver, sender, session, round)`` so
delivery order between sessions never matters.

Two schedulers are supported and must give identical results:

* ``"async"`` -- all parties are asyncio tasks on one thread (round-robin);
* ``"threads"`` -- one OS thread per party, each running its own event loop.

Traffic is counted per frame; modeled time is ``rounds * latency + bytes /
bandwidth`` rather than an injected sleep.
"""

from __future__ import annotations

import asyncio
import struct
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable, Iterable, Sequence

import numpy as np

HEADER = struct.Struct("<B8sII")  # sender, session tag, round, payload word count


class ProtocolError(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass
class Frame:
    sender: int
    receiver: int
    session_tag: bytes
    round: int
    payload: np.ndarray
    ops: tuple[str, ...] = ()
    kind: str = "ring"  # "ring" for Z_2^64 words, "index" for public permutations

    @property
    def nbytes(self) -> int:
        return HEADER.size + 8 * int(self.payload.size)

    def to_bytes(self) -> bytes:
        words = np.ascontiguousarray(self.payload, dtype="<u8").ravel()
        return HEADER.pack(self.sender, self.session_tag, self.round, words.size) + words.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes, receiver: int = 0) -> "Frame":
        sender, tag, rnd, count = HEADER.unpack_from(buf)
        body = buf[HEADER.size:]
        if len(body) != 8 * count:
            raise ProtocolError("truncated frame payload")
        payload = np.frombuffer(body, dtype="<u8").astype(np.uint64)
        return cls(sender, receiver, tag, rnd, payload)


@dataclass
class _Counter:
    rounds: set = field(default_factory=set)
    frames: int = 0
    bytes: int = 0


class TrafficStats:
    """Round/frame/byte counters, globally, per party and per operation label."""

    def __init__(self, latency: float = 0.005, bandwidth_bps: float = 100e6):
        self.latency = latency
        self.bandwidth_bps = bandwidth_bps
        self._global = _Counter()
        self._sent: dict[int, _Counter] = defaultdict(_Counter)
        self._recv: dict[int, _Counter] = defaultdict(_Counter)
        self._ops: dict[str, _Counter] = defaultdict(_Counter)
        self._lock = threading.Lock()

    def record(self, frame: Frame) -> None:
        key = (frame.session_tag, frame.round)
        nb = frame.nbytes
        with self._lock:
            for c in (self._global, self._sent[frame.sender], self._recv[frame.receiver]):
                c.rounds.add(key)
                c.frames += 1
                c.bytes += nb
            for label in set(frame.ops):
                c = self._ops[label]
                c.rounds.add(key)
                c.frames += 1
                c.bytes += nb

    @property
    def rounds(self) -> int:
        return len(self._global.rounds)

    @property
    def frames(self) -> int:
        return self._global.frames

    @property
    def bytes(self) -> int:
        return self._global.bytes

    @property
    def modeled_seconds(self) -> float:
        return self.rounds * self.latency + 8 * self.bytes / self.bandwidth_bps

    def op(self, label: str) -> dict[str, int]:
        c = self._ops.get(label, _Counter())
        return {"rounds": len(c.rounds), "frames": c.frames, "bytes": c.bytes}

    def party(self, pid: int) -> dict[str, int]:
        s, r = self._sent.get(pid, _Counter()), self._recv.get(pid, _Counter())
        return {
            "rounds": len(s.rounds | r.rounds),
            "frames_sent": s.frames,
            "bytes_sent": s.bytes,
            "frames_received": r.frames,
            "bytes_received": r.bytes,
        }

    def report(self) -> dict[str, Any]:
        return {
            "per_op": {k: self.op(k) for k in sorted(self._ops)},
            "per_party": {str(p): self.party(p) for p in sorted(set(self._sent) | set(self._recv))},
            "totals": {"rounds": self.rounds, "frames": self.frames, "bytes": self.bytes},
            "latency_s": self.latency,
            "bandwidth_bps": self.bandwidth_bps,
            "modeled_seconds": self.modeled_seconds,
        }


class Network:
    """Mailboxes for ``n`` parties plus traffic accounting and optional audit log."""

    def __init__(self, n: int, *, latency: float = 0.005, bandwidth_bps: float = 100e6,
                 audit: bool = False, scheduler: str = "async"):
        if n < 2:
            raise ConfigurationError("need at least two parties")
        if scheduler not in ("async", "threads"):
            raise ConfigurationError(f"unknown scheduler {scheduler!r}")
        self.n = n
        self.scheduler = scheduler
        self.stats = TrafficStats(latency, bandwidth_bps)
        self.audit = audit
        self.log: list[Frame] = []
        self._box: dict[tuple, Frame] = {}
        self._cond = threading.Condition()
        self._futures: dict[tuple, list[asyncio.Future]] = {}
        self._blocked: dict[object, tuple] = {}
        self._live = 0
        self._deadlock = False

    # -- delivery ---------------------------------------------------------
    def check_endpoint(self, pid: int) -> None:
        if not 1 <= pid <= self.n:
            raise ConfigurationError(f"unknown endpoint {pid}")

    def post(self, frame: Frame) -> None:
        self.check_endpoint(frame.sender)
        self.check_endpoint(frame.receiver)
        key = (frame.receiver, frame.sender, frame.session_tag, frame.round)
        self.stats.record(frame)
        with self._cond:
            if self.audit:
                self.log.append(frame)
            if key in self._box:
                raise ProtocolError(f"duplicate frame {key}")
            self._box[key] = frame
            if self.scheduler == "threads":
                self._cond.notify_all()
            else:
                for fut in self._futures.pop(key, ()):
                    if not fut.done():
                        fut.set_result(None)

    def note_local(self, frame: Frame) -> None:
        """Record a party's own contribution to an opening (audit log only, not traffic)."""
        if self.audit:
            with self._cond:
                self.log.append(frame)

    def _stuck(self) -> int:
        return sum(1 for k in self._blocked.values() if k not in self._box)

    async def fetch(self, receiver: int, sender: int, tag: bytes, rnd: int) -> Frame:
        key = (receiver, sender, tag, rnd)
        if self.scheduler == "threads":
            return self._fetch_blocking(key)
        while key not in self._box:
            if self._deadlock or self._stuck() + 1 >= self._live:
                self._raise_deadlock(key)
            fut = asyncio.get_running_loop().create_future()
            self._futures.setdefault(key, []).append(fut)
            self._blocked[fut] = key
            try:
                await fut
            finally:
                self._blocked.pop(fut, None)
        return self._box.pop(key)

    def _fetch_blocking(self, key) -> Frame:
        me = threading.get_ident()
        with self._cond:
            try:
                while key not in self._box:
                    if self._deadlock or self._stuck() + 1 >= self._live:
                        self._raise_deadlock(key)
                    self._blocked[me] = key
                    self._cond.wait(timeout=5.0)
                    self._blocked.pop(me, None)
                return self._box.pop(key)
            finally:
                self._blocked.pop(me, None)

    def _wake_all(self):
        if self.scheduler == "threads":
            self._cond.notify_all()
        else:
            for futs in self._futures.values():
                for fut in futs:
                    if not fut.done():
                        fut.set_result(None)
            self._futures.clear()

    def _raise_deadlock(self, key):
        self._deadlock = True
        self._wake_all()
        raise ProtocolError(f"deadlock: every live party is blocked (waiting for {key})")

    # -- task bookkeeping -------------------------------------------------
    def _enter(self):
        with self._cond:
            self._live += 1

    def _leave(self):
        with self._cond:
            self._live -= 1
            if self._live and self._stuck() >= self._live:
                self._deadlock = True
            self._wake_all()

    def pending(self) -> int:
        return len(self._box)


def run_parties(network: Network, tasks: Sequence[Callable[[], Awaitable[Any]]]) -> list[Any]:
    """Run one coroutine factory per party/session and return their results in order."""

    async def wrapped(fn):
        try:
            return await fn()
        finally:
            network._leave()

    for _ in tasks:
        network._enter()

    if network.scheduler == "async":
        async def main():
            return await asyncio.gather(*(wrapped(fn) for fn in tasks), return_exceptions=True)
        results = asyncio.run(main())
    else:
        results: list[Any] = [None] * len(tasks)

        def target(i, fn):
            try:
                results[i] = asyncio.run(wrapped(fn))
            except BaseException as exc:  # surfaced below
                results[i] = exc

        threads = [threading.Thread(target=target, args=(i, fn), daemon=True) for i, fn in enumerate(tasks)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    errors = [r for r in results if isinstance(r, BaseException)]
    if errors:
        primary = next((e for e in errors if not isinstance(e, ProtocolError)), errors[0])
        raise primary
    return list(results)


# -- transcript audit -------------------------------------------------------

@dataclass
class AuditReport:
    hits: list[dict] = field(default_factory=list)
    frames_scanned: int = 0
    per_op: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return not self.hits


def transcript_audit(network: Network, forbidden: dict[int, Iterable[int]],
                     stats: TrafficStats | None = None) -> AuditReport:
    """Scan logged frames for forbidden plaintext words.

    ``forbidden`` maps an owner party id to the ring words (encoded private
    values: labels, feature columns, thresholds) that no *other* party may
    ever receive, either in a single payload or in the value reconstructed
    from all frames it received for one (session, round, op).
    """
    if not network.audit:
        raise ConfigurationError("network was not created with audit=True")
    owned = {p: {int(w) for w in ws if int(w) != 0} for p, ws in forbidden.items()}
    report = AuditReport()
    groups: dict[tuple, list[Frame]] = defaultdict(list)

    def scan(words: np.ndarray, receiver: int, where: dict):
        if words.size == 0:
            return
        present = set(np.unique(words).tolist())
        for owner, bad in owned.items():
            if owner == receiver:
                continue
            for w in present & bad:
                report.hits.append({**where, "owner": owner, "receiver": receiver, "word": int(w)})

    for fr in network.log:
        report.frames_scanned += 1
        if fr.kind != "ring":
            continue
        where = {"sender": fr.sender, "round": fr.round, "ops": list(fr.ops)}
        scan(np.asarray(fr.payload, dtype=np.uint64).ravel(), fr.receiver, where)
        groups[(fr.receiver, fr.session_tag, fr.round, fr.ops)].append(fr)

    for (receiver, _tag, rnd, ops), frames in groups.items():
        if len(frames) < 2 or len({f.payload.shape for f in frames}) != 1:
            continue
        total = np.zeros(frames[0].payload.shape, dtype=np.uint64)
        for f in frames:
            total += np.asarray(f.payload, dtype=np.uint64)
        scan(total.ravel(), receiver, {"sender": "sum", "round": rnd, "ops": list(ops)})

    if stats is not None:
        report.per_op = stats.report()["per_op"]
    return report
