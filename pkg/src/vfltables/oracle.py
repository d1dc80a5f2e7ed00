"""Floating-point reference trainer for decision-table ensembles.

It follows the same conventions as the secure path (stable ascending sort,
equal-size buckets with the remainder in the last one, strict ``<`` tests,
first-index tie-breaks) so that any disagreement points at a bug.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tables import BoostHyperparams


@dataclass
class PlainTable:
    features: list[int]
    thresholds: list[float]
    weights: np.ndarray
    buckets: list[int] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(self.features)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "levels": [{"feature_id": int(f), "threshold": float(t), "bucket": int(b)}
                       for f, t, b in zip(self.features, self.thresholds, self.buckets or [0] * self.dimension)],
            "weights": [float(w) for w in self.weights],
        }


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def gradients(y: np.ndarray, yhat: np.ndarray, task: str) -> tuple[np.ndarray, np.ndarray]:
    if task == "regression":
        return yhat - y, np.ones_like(yhat)
    p = sigmoid(yhat)
    return p - y, p * (1.0 - p)


def level_scores(X: np.ndarray, g: np.ndarray, h: np.ndarray, node: np.ndarray, n_nodes: int,
                 n_buckets: int, lam: float) -> np.ndarray:
    """Candidate scores (J, B-1): sum over nodes of -G^2/2(H+lam) for both sides."""
    N, J = X.shape
    size = N // n_buckets
    out = np.zeros((J, n_buckets - 1))
    for j in range(J):
        order = np.argsort(X[:, j], kind="stable")
        for k in range(n_nodes):
            inside = node[order] == k
            gs = np.where(inside, g[order], 0.0)
            hs = np.where(inside, h[order], 0.0)
            gb = np.array([gs[b * size:(b + 1) * size if b < n_buckets - 1 else N].sum() for b in range(n_buckets)])
            hb = np.array([hs[b * size:(b + 1) * size if b < n_buckets - 1 else N].sum() for b in range(n_buckets)])
            for c in range(n_buckets - 1):
                gl, hl = gb[:c + 1].sum(), hb[:c + 1].sum()
                gr, hr = gb.sum() - gl, hb.sum() - hl
                out[j, c] -= 0.5 * gl * gl / (hl + lam) + 0.5 * gr * gr / (hr + lam)
    return out


def choose_split(scores: np.ndarray) -> tuple[int, int]:
    """Best bucket per feature, then best feature; ties go to the smaller index."""
    per_feature = np.argmin(scores, axis=1)
    best = scores[np.arange(scores.shape[0]), per_feature]
    feature = int(np.argmin(best))
    return feature, int(per_feature[feature])


def train_plain_table(X: np.ndarray, g: np.ndarray, h: np.ndarray, hyper: BoostHyperparams,
                      trace: list | None = None) -> PlainTable:
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[0]
    node = np.zeros(N, dtype=np.int64)
    features, thresholds, buckets = [], [], []
    size = N // hyper.buckets
    for d in range(hyper.depth):
        scores = level_scores(X, g, h, node, 1 << d, hyper.buckets, hyper.lam)
        f, q = choose_split(scores)
        t = float(np.sort(X[:, f], kind="stable")[(q + 1) * size])
        if trace is not None:
            trace.append(scores)
        features.append(f)
        thresholds.append(t)
        buckets.append(q)
        node = 2 * node + (X[:, f] >= t)
    leaves = 1 << hyper.depth
    G = np.bincount(node, weights=g, minlength=leaves)
    H = np.bincount(node, weights=h, minlength=leaves)
    weights = -G / (H + hyper.lam) * hyper.shrinkage
    return PlainTable(features, thresholds, weights, buckets)


def leaf_index(table: PlainTable, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    idx = np.zeros(X.shape[0], dtype=np.int64)
    for f, t in zip(table.features, table.thresholds):
        idx = 2 * idx + (X[:, f] >= t)
    return idx


def infer_plain(model, X: np.ndarray) -> np.ndarray:
    """Score of one table or the sum over an ensemble (list of tables)."""
    tables = model if isinstance(model, (list, tuple)) else [model]
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    total = np.zeros(X.shape[0])
    for t in tables:
        total += np.asarray(t.weights)[leaf_index(t, X)]
    return total


def train_plain_ensemble(X: np.ndarray, y: np.ndarray, hyper: BoostHyperparams,
                         history: list | None = None) -> list[PlainTable]:
    """Boosting loop; ``history`` (if given) receives the training scores after each table."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    yhat = np.zeros(len(y))
    tables = []
    for _ in range(hyper.trees):
        g, h = gradients(y, yhat, hyper.task)
        table = train_plain_table(X, g, h, hyper)
        tables.append(table)
        yhat = yhat + infer_plain(table, X)
        if history is not None:
            history.append(yhat.copy())
    return tables


def dump_plain(tables: list[PlainTable], path) -> None:
    with open(path, "w") as fh:
        json.dump({"tables": [t.to_dict() for t in tables]}, fh, indent=2)


def load_plain(path) -> list[PlainTable]:
    with open(path) as fh:
        raw = json.load(fh)
    return [PlainTable([lv["feature_id"] for lv in t["levels"]], [lv["threshold"] for lv in t["levels"]],
                       np.array(t["weights"], dtype=np.float64), [lv["bucket"] for lv in t["levels"]])
            for t in raw["tables"]]
