"""Secure training and inference of decision tables (oblivious trees).

A decision table of dimension D applies one test ``x[F_d] < t_d`` per level.
The D outcomes, read with level 0 as the most significant bit and the
test-true branch as 0, give the leaf index directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import sharing as S
from .permdisc import sec_disc, sort_permutation, threshold_position
from .ring import encode
from .secmath import ApproxConfig, sec_argmin, sec_div, sec_sigmoid
from .sharing import SharedVector, ShapeError
from .transport import ConfigurationError

TASKS = ("regression", "classification")


@dataclass(frozen=True)
class BoostHyperparams:
    lam: float = 1.0
    trees: int = 10
    depth: int = 3
    buckets: int = 32
    task: str = "classification"
    shrinkage: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if not self.lam > 0:
            raise ConfigurationError("lambda must be positive")
        if self.buckets < 2:
            raise ConfigurationError("need at least two buckets")
        if self.depth < 1 or self.trees < 1:
            raise ConfigurationError("depth and trees must be at least 1")


@dataclass(frozen=True)
class FeatureLayout:
    """Public map from global feature id to (owner party, column index at the owner)."""
    owners: tuple[int, ...]
    local_index: tuple[int, ...]

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "FeatureLayout":
        owners, local = [], []
        for party, c in enumerate(counts, start=1):
            owners += [party] * c
            local += list(range(c))
        return cls(tuple(owners), tuple(local))

    @property
    def n_features(self) -> int:
        return len(self.owners)

    def owned_by(self, party: int) -> list[int]:
        return [j for j, o in enumerate(self.owners) if o == party]


@dataclass
class PartyData:
    """One party's private columns (and labels, for the active party)."""
    columns: np.ndarray                  # (N, J_m)
    feature_ids: tuple[int, ...]         # global id of each column
    labels: np.ndarray | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        self.columns = np.asarray(self.columns, dtype=np.float64)
        if self.columns.ndim != 2 or self.columns.shape[1] != len(self.feature_ids):
            raise ShapeError("columns must be (N, number of owned features)")
        self._pos = {int(g): i for i, g in enumerate(self.feature_ids)}
        self._perm: dict[int, np.ndarray] = {}

    @property
    def n_samples(self) -> int:
        return self.columns.shape[0]

    def column(self, feature: int) -> np.ndarray:
        return self.columns[:, self._pos[int(feature)]]

    def sort_perm(self, feature: int) -> np.ndarray:
        if feature not in self._perm:
            self._perm[feature] = sort_permutation(self.column(feature))
        return self._perm[feature]

    def sorted_values(self, feature: int) -> np.ndarray:
        return self.column(feature)[self.sort_perm(feature)]


@dataclass
class DecisionTable:
    """One party's view of a trained table: public tests, own thresholds, weight shares."""
    dimension: int
    features: list[int]
    owners: list[int]
    buckets: list[int]
    thresholds: dict[int, float]      # level -> threshold, only levels this party owns
    weights: SharedVector             # (2^D,) scaled

    def public_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "levels": [{"feature_id": int(f), "owner_id": int(o)} for f, o in zip(self.features, self.owners)],
        }


@dataclass
class LevelGradients:
    g: SharedVector   # (nodes, N); row k holds node k's gradients, zero outside the node
    h: SharedVector

    @property
    def nodes(self) -> int:
        return self.g.shape[0]


@dataclass
class LevelSplit:
    feature: int
    bucket: int
    owner: int
    threshold: float | None           # set only at the owner
    feature_buckets: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


def leaf_bits(depth: int, level: int) -> np.ndarray:
    """Bit of each leaf index contributed by ``level`` (level 0 is the most significant)."""
    return (np.arange(1 << depth) >> (depth - 1 - level)) & 1


def table_approx(approx: ApproxConfig, n_samples: int, lam: float, adaptive: bool = True) -> ApproxConfig:
    """Reciprocal start for denominators in [lam, N + lam]: z_0 = 2^-(ceil(log2(N + lam)) + 1)."""
    if not adaptive:
        return approx
    return approx.with_init(int(np.ceil(np.log2(n_samples + lam))) + 1)


async def compute_gradients(ctx, y: SharedVector, yhat: SharedVector, task: str,
                            cfg: ApproxConfig | None = None) -> LevelGradients:
    if task not in TASKS:
        raise ConfigurationError(f"unknown task {task!r}")
    if y.shape != yhat.shape:
        raise ShapeError("labels and predictions differ in length")
    with ctx.op("gradients"):
        if task == "regression":
            g = yhat - y
            h = S.public(ctx, np.full(y.shape, encode(1.0, ctx.fxp), dtype=np.uint64))
        else:
            p = await sec_sigmoid(ctx, yhat, cfg)
            g = p - y
            one_minus = (-p).add_public(encode(1.0, ctx.fxp))
            h = await S.mul(ctx, p, one_minus)
    return LevelGradients(g.reshape(1, -1), h.reshape(1, -1))


async def find_level_split(ctx, grads: LevelGradients, hyper: BoostHyperparams, layout: FeatureLayout,
                           data: PartyData | None, cfg: ApproxConfig, chunk_words: int = 1 << 22) -> LevelSplit:
    """Pick the public (feature, bucket) with the minimum summed score at this level."""
    K, N = grads.g.shape
    B = hyper.buckets
    if B - 1 < 1:
        raise ConfigurationError("need at least one split candidate")
    J = layout.n_features
    lam = encode(hyper.lam, ctx.fxp)
    per_chunk = max(1, chunk_words // max(1, 2 * K * N))
    deltas = []
    with ctx.op("split-search"):
        for start in range(0, J, per_chunk):
            feats = list(range(start, min(J, start + per_chunk)))
            row_feature = [j for j in feats for _ in range(K)]
            owners = [layout.owners[j] for j in row_feature]
            perms = {r: data.sort_perm(j) for r, j in enumerate(row_feature) if owners[r] == ctx.id}
            reps = len(feats)
            g = grads.g._like(np.tile(grads.g.values, (reps, 1)))
            h = grads.h._like(np.tile(grads.h.values, (reps, 1)))
            sums = await sec_disc(ctx, g, h, owners, perms, B)
            alpha = sums.alpha.reshape(reps, K, B)
            beta = sums.beta.reshape(reps, K, B)
            g_left = alpha.cumsum(-1)[..., :B - 1]
            h_left = beta.cumsum(-1)[..., :B - 1]
            g_right = alpha.sum(-1).reshape(reps, K, 1) - g_left
            h_right = beta.sum(-1).reshape(reps, K, 1) - h_left
            num = S.concat([g_left, g_right])
            den = S.concat([h_left, h_right]).add_public(lam)
            ratio = await sec_div(ctx, num, den, cfg)
            (prod,) = await S.mul_many(ctx, [(num, ratio)])
            (half,) = await S.truncate_many(ctx, [prod], bits=ctx.fxp.precision_bits + 1)
            half = half.reshape(2, reps, K, B - 1)
            deltas.append(-(half[0] + half[1]).sum(axis=1))
        delta = deltas[0]._like(np.concatenate([d.values for d in deltas]))
        best_bucket = await sec_argmin(ctx, delta)
        sigma = delta._like(delta.values[np.arange(J), best_bucket])
        feature = int((await sec_argmin(ctx, sigma.reshape(1, J)))[0])
    bucket = int(best_bucket[feature])
    owner = layout.owners[feature]
    threshold = None
    if owner == ctx.id:
        threshold = float(data.sorted_values(feature)[threshold_position(bucket, N, B)])
    return LevelSplit(feature, bucket, owner, threshold, best_bucket)


async def sec_split(ctx, split: LevelSplit, grads: LevelGradients, data: PartyData | None) -> LevelGradients:
    """Route each node's gradients to its two children with shared raw indicators (exact)."""
    K, N = grads.g.shape
    with ctx.op("split"):
        left = right = None
        if split.owner == ctx.id:
            mask = data.column(split.feature) < split.threshold
            left = mask.astype(np.uint64)
            right = (~mask).astype(np.uint64)
        v_l, v_r = await S.input_share_many(ctx, [(split.owner, left, (N,), 0), (split.owner, right, (N,), 0)])
        v_l, v_r = v_l.reshape(1, N), v_r.reshape(1, N)
        gl, gr, hl, hr = await S.mul_many(ctx, [(v_l, grads.g), (v_r, grads.g), (v_l, grads.h), (v_r, grads.h)])
    g = gl._like(np.stack([gl.values, gr.values], axis=1).reshape(2 * K, N))
    h = hl._like(np.stack([hl.values, hr.values], axis=1).reshape(2 * K, N))
    return LevelGradients(g, h)


async def compute_leaf_weights(ctx, grads: LevelGradients, hyper: BoostHyperparams,
                               cfg: ApproxConfig) -> SharedVector:
    """w_k = -G_k / (H_k + lambda), optionally scaled by the shrinkage factor."""
    with ctx.op("leaf-weights"):
        G = grads.g.sum(axis=1)
        H = grads.h.sum(axis=1).add_public(encode(hyper.lam, ctx.fxp))
        w = -(await sec_div(ctx, G, H, cfg))
        if hyper.shrinkage != 1.0:
            w = await S.mul_const(ctx, w, hyper.shrinkage)
    return w


async def sec_table(ctx, y: SharedVector, yhat: SharedVector, hyper: BoostHyperparams, layout: FeatureLayout,
                    data: PartyData | None, *, approx: ApproxConfig | None = None, adaptive_init: bool = True,
                    trace: list | None = None, chunk_words: int = 1 << 22) -> DecisionTable:
    """Train one table: gradients, D level splits, then leaf weights."""
    approx = approx or ctx.approx or ApproxConfig()
    N = y.shape[0]
    div_cfg = table_approx(approx, N, hyper.lam, adaptive_init)
    with ctx.op("table"):
        grads = await compute_gradients(ctx, y, yhat, hyper.task, approx)
        if trace is not None:
            trace.append({"g": grads.g, "h": grads.h, "splits": []})
        splits = []
        for _level in range(hyper.depth):
            split = await find_level_split(ctx, grads, hyper, layout, data, div_cfg, chunk_words)
            grads = await sec_split(ctx, split, grads, data)
            splits.append(split)
            if trace is not None:
                trace[-1]["splits"].append((split.feature, split.bucket, split.feature_buckets))
        weights = await compute_leaf_weights(ctx, grads, hyper, div_cfg)
    return DecisionTable(
        dimension=hyper.depth,
        features=[s.feature for s in splits],
        owners=[s.owner for s in splits],
        buckets=[s.bucket for s in splits],
        thresholds={d: s.threshold for d, s in enumerate(splits) if s.owner == ctx.id},
        weights=weights,
    )


def leaf_indicator(column: np.ndarray, threshold: float, depth: int, level: int) -> np.ndarray:
    """Raw (N, 2^D) indicator: entry k is 1 iff leaf k agrees with this level's outcome."""
    went_right = (~(np.asarray(column) < threshold)).astype(np.int64)
    return (leaf_bits(depth, level)[None, :] == went_right[:, None]).astype(np.uint64)


async def sec_infer_many(ctx, tables: Sequence[DecisionTable], data: PartyData | None,
                         n_samples: int) -> SharedVector:
    """Sum of the selected leaf weights of several tables for ``n_samples`` rows.

    All indicators are shared in one round; the D indicator products per
    table then run level by level, batched across tables.
    """
    if not tables:
        return S.zeros(ctx, (n_samples,))
    with ctx.op("infer"):
        items, where = [], []
        for t, table in enumerate(tables):
            if table.weights.shape != (1 << table.dimension,):
                raise ShapeError(f"table {t}: {table.weights.shape[0]} weights for dimension {table.dimension}")
            for d in range(table.dimension):
                owner = table.owners[d]
                words = None
                if owner == ctx.id:
                    words = leaf_indicator(data.column(table.features[d]), table.thresholds[d], table.dimension, d)
                items.append((owner, words, (n_samples, 1 << table.dimension), 0))
                where.append((t, d))
        shared = await S.input_share_many(ctx, items)
        ind = {key: sv for key, sv in zip(where, shared)}
        acc = [table.weights.reshape(1, -1) for table in tables]
        for d in range(max(t.dimension for t in tables)):
            live = [t for t, table in enumerate(tables) if d < table.dimension]
            prods = await S.mul_many(ctx, [(ind[(t, d)], acc[t]) for t in live])
            for t, p in zip(live, prods):
                acc[t] = p
        total = acc[0].sum(axis=1)
        for a in acc[1:]:
            total = total + a.sum(axis=1)
    return total


async def sec_infer(ctx, table: DecisionTable, data: PartyData | None, n_samples: int) -> SharedVector:
    return await sec_infer_many(ctx, [table], data, n_samples)
