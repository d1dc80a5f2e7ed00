"""Multi-party orchestration: label sharing, the boosting loop and prediction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import sharing as S
from .dealer import Dealer
from .party import AP, PP, PartyContext
from .ring import DEFAULT_FXP, FixedPointConfig, decode, encode
from .secmath import ApproxConfig
from .sharing import SharedVector, ShapeError
from .tables import BoostHyperparams, DecisionTable, FeatureLayout, PartyData, sec_infer_many, sec_table
from .transport import ConfigurationError, Network, run_parties


class RoleError(RuntimeError):
    pass


@dataclass
class Ensemble:
    """T trained tables as seen by each party (index 0 is party 1)."""
    hyper: BoostHyperparams
    layout: FeatureLayout
    tables: list[list[DecisionTable]]
    active_party: int = 1
    label_meta: dict = field(default_factory=dict)

    @property
    def n_parties(self) -> int:
        return len(self.tables)

    @property
    def n_tables(self) -> int:
        return len(self.tables[0]) if self.tables else 0

    def party_view(self, party: int) -> list[DecisionTable]:
        return self.tables[party - 1]

    def truncated(self, count: int) -> "Ensemble":
        return Ensemble(self.hyper, self.layout, [ts[:count] for ts in self.tables], self.active_party,
                        dict(self.label_meta))


@dataclass
class TrainResult:
    ensemble: Ensemble
    network: Network
    traces: list[list[dict]] | None = None   # per party, per table: shares of g, h, yhat


@dataclass
class PredictResult:
    scores: list[np.ndarray | None]          # per party; None where nothing was revealed
    network: Network
    per_round: list[np.ndarray | None] | None = None


def roles_for(n: int, active_party: int = 1) -> list[str]:
    return [AP if m == active_party else PP for m in range(1, n + 1)]


def layout_for(datasets: Sequence[PartyData]) -> FeatureLayout:
    owners, local = {}, {}
    for party, d in enumerate(datasets, start=1):
        for i, gid in enumerate(d.feature_ids):
            if gid in owners:
                raise ConfigurationError(f"feature {gid} is owned by parties {owners[gid]} and {party}")
            owners[gid], local[gid] = party, i
    J = len(owners)
    if sorted(owners) != list(range(J)):
        raise ConfigurationError("global feature ids must be exactly 0..J-1")
    return FeatureLayout(tuple(owners[j] for j in range(J)), tuple(local[j] for j in range(J)))


async def check_row_counts(ctx, n_rows: int) -> None:
    """Exchange row counts as a cheap guard against misaligned partitions."""
    with ctx.op("row-check"):
        mine = np.array([n_rows], dtype=np.uint64)
        got = await ctx.exchange({m: mine for m in ctx.others}, ctx.others)
    counts = {ctx.id: n_rows, **{m: int(v[0]) for m, v in got.items()}}
    if len(set(counts.values())) != 1:
        raise ConfigurationError(f"parties disagree on the number of rows: {counts}")


async def share_labels(ctx, labels: np.ndarray | None, n_rows: int, active_party: int = 1) -> SharedVector:
    """The active party secret-shares its (already normalised) labels as fixed-point values."""
    if labels is not None and ctx.role != AP:
        raise RoleError(f"party {ctx.id} is passive and holds no labels to share")
    if ctx.id == active_party and labels is None:
        raise RoleError("the active party must supply labels")
    words = None
    if ctx.id == active_party:
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (n_rows,):
            raise ShapeError(f"expected {n_rows} labels, got {labels.shape}")
        words = encode(labels, ctx.fxp)
    with ctx.op("labels"):
        return await S.input_share(ctx, active_party, words, (n_rows,), 1)


def _contexts(n, net, dealer, session, seeds, roles, datasets, approx, fxp, trunc_method):
    return [PartyContext(m, net, dealer, session=session, seed=seeds[m - 1], fxp=fxp, approx=approx,
                         trunc_method=trunc_method, role=roles[m - 1], data=datasets[m - 1])
            for m in range(1, n + 1)]


def _party_seeds(seed: int, n: int, seeds: Sequence[int] | None) -> list[int]:
    if seeds is None:
        return [int(seed) * 1000 + m for m in range(1, n + 1)]
    if len(seeds) != n:
        raise ConfigurationError(f"need one seed per party, got {len(seeds)} for {n}")
    return [int(s) for s in seeds]


def train_ensemble(datasets: Sequence[PartyData], hyper: BoostHyperparams, *,
                   approx: ApproxConfig | None = None, adaptive_init: bool = True,
                   active_party: int = 1, seed: int = 0, party_seeds: Sequence[int] | None = None,
                   fxp: FixedPointConfig = DEFAULT_FXP, trunc_method: str = "exact",
                   network: Network | None = None, scheduler: str = "async", audit: bool = False,
                   latency: float = 0.005, bandwidth_bps: float = 100e6, trace: bool = False,
                   label_meta: dict | None = None, chunk_words: int = 1 << 22) -> TrainResult:
    """Train T tables over vertically partitioned ``datasets`` (one per party, party order)."""
    n = len(datasets)
    if n < 2:
        raise ConfigurationError("need at least two parties")
    if not 1 <= active_party <= n:
        raise ConfigurationError(f"active party {active_party} is not in 1..{n}")
    if datasets[active_party - 1].labels is None:
        raise ConfigurationError("the active party's dataset carries no labels")
    for m, d in enumerate(datasets, start=1):
        if m != active_party and d.labels is not None:
            raise RoleError(f"passive party {m} must not hold labels")
    layout = layout_for(datasets)
    approx = approx or ApproxConfig()
    net = network or Network(n, latency=latency, bandwidth_bps=bandwidth_bps, audit=audit, scheduler=scheduler)
    dealer = Dealer(n, seed)
    roles = roles_for(n, active_party)
    ctxs = _contexts(n, net, dealer, "train", _party_seeds(seed, n, party_seeds), roles, datasets, approx, fxp,
                     trunc_method)

    async def program(ctx: PartyContext):
        data: PartyData = ctx.data
        N = data.n_samples
        await check_row_counts(ctx, N)
        y = await share_labels(ctx, data.labels if ctx.role == AP else None, N, active_party)
        yhat = S.zeros(ctx, (N,))
        tables, traces = [], []
        for _ in range(hyper.trees):
            rec = [] if trace else None
            table = await sec_table(ctx, y, yhat, hyper, layout, data, approx=approx, adaptive_init=adaptive_init,
                                    trace=rec, chunk_words=chunk_words)
            yhat = yhat + await sec_infer_many(ctx, [table], data, N)
            tables.append(table)
            if trace:
                rec[0]["yhat"] = yhat
                traces.append(rec[0])
        return tables, traces

    results = run_parties(net, [lambda c=c: program(c) for c in ctxs])
    ensemble = Ensemble(hyper, layout, [r[0] for r in results], active_party, dict(label_meta or {}))
    return TrainResult(ensemble, net, [r[1] for r in results] if trace else None)


def _targets(reveal_to, n: int, active_party: int) -> list[int]:
    if reveal_to in (None, "ap"):
        return [active_party]
    if reveal_to == "all":
        return list(range(1, n + 1))
    targets = sorted({int(t) for t in reveal_to})
    if any(not 1 <= t <= n for t in targets):
        raise ConfigurationError(f"reveal targets {targets} outside 1..{n}")
    return targets


def predict(ensemble: Ensemble, datasets: Sequence[PartyData], *, reveal_to: Any = "ap", seed: int = 0,
            per_round: bool = False, fxp: FixedPointConfig = DEFAULT_FXP, network: Network | None = None,
            scheduler: str = "async", audit: bool = False, session: str = "predict") -> PredictResult:
    """Secure ensemble scores for the rows in ``datasets``; revealed only to ``reveal_to``.

    With ``per_round`` the targets also receive the running score after each
    table (used for learning curves).
    """
    n = len(datasets)
    if n != ensemble.n_parties:
        raise ConfigurationError(f"model has {ensemble.n_parties} parties, data has {n}")
    targets = _targets(reveal_to, n, ensemble.active_party)
    net = network or Network(n, audit=audit, scheduler=scheduler)
    dealer = Dealer(n, seed)
    roles = roles_for(n, ensemble.active_party)
    ctxs = _contexts(n, net, dealer, session, _party_seeds(seed, n, None), roles, datasets, None, fxp, "exact")

    async def program(ctx: PartyContext):
        data: PartyData = ctx.data
        N = data.n_samples
        await check_row_counts(ctx, N)
        tables = ensemble.party_view(ctx.id)
        if not per_round:
            total = await sec_infer_many(ctx, tables, data, N)
            words = await S.reveal(ctx, total, targets)
            return (None if words is None else decode(words, fxp)), None
        running, parts = S.zeros(ctx, (N,)), []
        for t in tables:
            running = running + await sec_infer_many(ctx, [t], data, N)
            parts.append(running)
        if not parts:
            words = await S.reveal(ctx, running, targets)
            return (None if words is None else decode(words, fxp)), None
        stacked = parts[0]._like(np.stack([p.values for p in parts]))
        words = await S.reveal(ctx, stacked, targets)
        if words is None:
            return None, None
        curve = np.atleast_2d(decode(words, fxp))
        return curve[-1], curve

    results = run_parties(net, [lambda c=c: program(c) for c in ctxs])
    return PredictResult([r[0] for r in results], net, [r[1] for r in results] if per_round else None)


def forbidden_words(datasets: Sequence[PartyData], ensemble: Ensemble | None = None,
                    fxp: FixedPointConfig = DEFAULT_FXP) -> dict[int, set[int]]:
    """Encoded private values per owner: feature columns, labels and thresholds."""
    out: dict[int, set[int]] = {}
    for m, d in enumerate(datasets, start=1):
        words = set(np.asarray(encode(d.columns.ravel(), fxp)).tolist())
        if d.labels is not None:
            words |= set(np.asarray(encode(np.asarray(d.labels, dtype=np.float64), fxp)).tolist())
        if ensemble is not None:
            for table in ensemble.party_view(m):
                words |= {int(encode(t, fxp)) for t in table.thresholds.values()}
        out[m] = words
    return out
