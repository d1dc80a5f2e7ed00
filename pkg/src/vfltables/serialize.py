"""On-disk model format.

``model.json`` is public: per table the dimension, the split features with
their owners, and a handle naming each party's weight-share file. Each
party directory holds that party's private sidecar (its own thresholds)
and its weight shares as little-endian 64-bit words.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .federation import Ensemble
from .party import session_tag
from .sharing import SharedVector
from .tables import BoostHyperparams, DecisionTable, FeatureLayout

FORMAT = "vfltables-model/1"


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_model(ensemble: Ensemble, out_dir, precision_bits: int = 20) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    public = {
        "format": FORMAT,
        "parties": ensemble.n_parties,
        "active_party": ensemble.active_party,
        "precision_bits": precision_bits,
        "hyper": asdict(ensemble.hyper),
        "features": [{"owner_id": o, "column": c} for o, c in zip(ensemble.layout.owners, ensemble.layout.local_index)],
        "tables": [],
    }
    for t, table in enumerate(ensemble.party_view(1)):
        entry = table.public_dict()
        entry["weights_handle"] = f"table-{t:04d}.u64"
        public["tables"].append(entry)
    _dump(root / "model.json", public)
    for m in range(1, ensemble.n_parties + 1):
        pdir = root / f"party{m}"
        pdir.mkdir(exist_ok=True)
        views = ensemble.party_view(m)
        sidecar = {"tables": [{str(d): thr for d, thr in sorted(tb.thresholds.items())} for tb in views]}
        if m == ensemble.active_party and ensemble.label_meta:
            sidecar["label_meta"] = ensemble.label_meta
        _dump(pdir / "private.json", sidecar)
        for t, tb in enumerate(views):
            (pdir / public["tables"][t]["weights_handle"]).write_bytes(
                np.ascontiguousarray(tb.weights.values, dtype="<u8").tobytes())
    return root


def load_model(model_dir) -> Ensemble:
    root = Path(model_dir)
    public = json.loads((root / "model.json").read_text())
    if public.get("format") != FORMAT:
        raise ValueError(f"{root}: unsupported model format {public.get('format')!r}")
    n = int(public["parties"])
    layout = FeatureLayout(tuple(f["owner_id"] for f in public["features"]),
                           tuple(f["column"] for f in public["features"]))
    tag = session_tag("train")
    tables, label_meta = [], {}
    for m in range(1, n + 1):
        pdir = root / f"party{m}"
        sidecar = json.loads((pdir / "private.json").read_text())
        if "label_meta" in sidecar:
            label_meta = sidecar["label_meta"]
        views = []
        for t, entry in enumerate(public["tables"]):
            words = np.frombuffer((pdir / entry["weights_handle"]).read_bytes(), dtype="<u8").astype(np.uint64)
            if words.size != 1 << entry["dimension"]:
                raise ValueError(f"{pdir / entry['weights_handle']}: expected {1 << entry['dimension']} words")
            levels = entry["levels"]
            views.append(DecisionTable(
                dimension=entry["dimension"],
                features=[lv["feature_id"] for lv in levels],
                owners=[lv["owner_id"] for lv in levels],
                buckets=[],
                thresholds={int(d): float(v) for d, v in sidecar["tables"][t].items()},
                weights=SharedVector(m, words, 1, tag),
            ))
        tables.append(views)
    return Ensemble(BoostHyperparams(**public["hyper"]), layout, tables, int(public["active_party"]), label_meta)
