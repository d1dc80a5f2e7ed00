"""Dataset ingestion: CSV I/O, vertical partitioning, label scaling, synthetic data."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tables import PartyData


class InputError(ValueError):
    pass


@dataclass
class Table:
    names: list[str]
    X: np.ndarray
    y: np.ndarray | None = None
    label: str | None = None


def read_csv(path, label: str | None = None) -> Table:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if label is not None and label not in header:
        raise InputError(f"{path}: label column {label!r} not found (columns: {', '.join(header)})")
    try:
        data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric or ragged rows ({exc})") from None
    if label is None:
        return Table(header, data)
    k = header.index(label)
    keep = [i for i in range(len(header)) if i != k]
    return Table([header[i] for i in keep], data[:, keep], data[:, k], label)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path, names: Sequence[str], X: np.ndarray, y: np.ndarray | None = None,
              label: str | None = None) -> None:
    cols = list(names) + ([label] if y is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(X.shape[0]):
            row = [_fmt(v) for v in X[i]]
            if y is not None:
                row.append(_fmt(y[i]))
            w.writerow(row)


def assign_columns(n_features: int, n_parties: int) -> list[list[int]]:
    """Round-robin column assignment: column i goes to party i mod n."""
    if n_parties < 2:
        raise InputError("need at least two parties")
    if n_features < n_parties:
        raise InputError(f"{n_features} features cannot cover {n_parties} parties")
    return [list(range(m, n_features, n_parties)) for m in range(n_parties)]


def train_test_indices(n_rows: int, seed: int, train_fraction: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n_rows)
    cut = int(round(train_fraction * n_rows))
    return np.sort(order[:cut]), np.sort(order[cut:])


@dataclass
class LabelScaler:
    """Affine map of regression targets onto [-1, 1]."""
    lo: float
    hi: float

    @classmethod
    def fit(cls, y: np.ndarray) -> "LabelScaler":
        y = np.asarray(y, dtype=np.float64)
        return cls(float(y.min()), float(y.max()))

    @property
    def span(self) -> float:
        return self.hi - self.lo if self.hi > self.lo else 1.0

    def transform(self, y):
        return 2.0 * (np.asarray(y, dtype=np.float64) - self.lo) / self.span - 1.0

    def inverse(self, z):
        return (np.asarray(z, dtype=np.float64) + 1.0) * self.span / 2.0 + self.lo

    def to_dict(self) -> dict:
        return {"kind": "minmax", "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict | None) -> "LabelScaler | None":
        if not d or d.get("kind") != "minmax":
            return None
        return cls(float(d["lo"]), float(d["hi"]))


def partition(X: np.ndarray, y: np.ndarray | None, n_parties: int, *, active_party: int = 1,
              names: Sequence[str] | None = None) -> list[PartyData]:
    """Split columns round-robin; global ids follow party order, then column order."""
    X = np.asarray(X, dtype=np.float64)
    names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
    parts, gid = [], 0
    for m, cols in enumerate(assign_columns(X.shape[1], n_parties), start=1):
        ids = tuple(range(gid, gid + len(cols)))
        gid += len(cols)
        parts.append(PartyData(X[:, cols], ids, y if m == active_party else None, tuple(names[c] for c in cols)))
    return parts


def split_dataset(csv_path, out_dir, n_parties: int, *, label: str, seed: int = 0,
                  train_fraction: float = 0.8, active_party: int = 1) -> dict:
    """Write per-party train/test CSVs; only the active party's files carry the label column."""
    table = read_csv(csv_path, label)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr, te = train_test_indices(len(table.X), seed, train_fraction)
    groups = assign_columns(len(table.names), n_parties)
    manifest = {"label": label, "seed": seed, "train_fraction": train_fraction, "active_party": active_party,
                "rows": {"train": int(len(tr)), "test": int(len(te))}, "parties": []}
    for m, cols in enumerate(groups, start=1):
        names = [table.names[c] for c in cols]
        entry = {"party": m, "columns": names}
        for split, idx in (("train", tr), ("test", te)):
            path = out / f"party{m}_{split}.csv"
            y = table.y[idx] if m == active_party else None
            write_csv(path, names, table.X[np.ix_(idx, cols)], y, label if y is not None else None)
            entry[split] = path.name
        manifest["parties"].append(entry)
    (out / "split.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_split(split_dir, split: str = "train") -> tuple[list[PartyData], np.ndarray, dict]:
    """Read the per-party CSVs written by :func:`split_dataset`; returns data, labels, manifest."""
    root = Path(split_dir)
    manifest = json.loads((root / "split.json").read_text())
    label, ap = manifest["label"], manifest["active_party"]
    parts, gid, labels = [], 0, None
    for entry in manifest["parties"]:
        m = entry["party"]
        t = read_csv(root / entry[split], label if m == ap else None)
        if t.names != entry["columns"]:
            raise InputError(f"party {m}: columns {t.names} differ from manifest {entry['columns']}")
        ids = tuple(range(gid, gid + len(t.names)))
        gid += len(t.names)
        if m == ap:
            labels = t.y
        parts.append(PartyData(t.X, ids, t.y if m == ap else None, tuple(t.names)))
    return parts, labels, manifest


def breast_cancer() -> Table:
    from sklearn.datasets import load_breast_cancer

    ds = load_breast_cancer()
    return Table([str(n).replace(" ", "_") for n in ds.feature_names], ds.data.astype(np.float64),
                 ds.target.astype(np.float64), "target")


def synthetic(samples: int, features: int, task: str, seed: int = 0, informative: int | None = None,
              noise: float = 0.1) -> Table:
    """Linear model plus noise (regression) or a logistic draw on it (classification)."""
    if samples < 1 or features < 1:
        raise InputError("samples and features must be at least 1")
    if task not in ("regression", "classification"):
        raise InputError(f"unknown task {task!r}")
    rng = np.random.default_rng(seed)
    k = features if informative is None else max(1, min(informative, features))
    X = rng.standard_normal((samples, features))
    coef = np.zeros(features)
    coef[:k] = rng.uniform(-1.0, 1.0, k)
    z = X @ coef / np.sqrt(k)
    if task == "regression":
        y = z + noise * rng.standard_normal(samples)
    else:
        y = (rng.random(samples) < 1.0 / (1.0 + np.exp(-4.0 * z))).astype(np.float64)
    return Table([f"f{i}" for i in range(features)], np.round(X, 6), np.round(y, 6), "label")
