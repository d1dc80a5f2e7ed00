"""Command-line entry point: ``vfltables <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import data as D
from . import metrics as M
from . import oracle as O
from . import plots
from .config import RunConfig
from .federation import forbidden_words, predict, train_ensemble
from .serialize import load_model, save_model
from .tables import BoostHyperparams
from .transport import ConfigurationError, transcript_audit

log = logging.getLogger("vfltables")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- configuration --------------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--parties", type=int)
    p.add_argument("--trees", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--buckets", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--task", choices=("regression", "classification"))
    p.add_argument("--seed", type=int, help="dealer/party seed")
    p.add_argument("--paper-faithful", action="store_true",
                   help="reciprocal start 2^-20 everywhere and no sigmoid clamp")
    p.add_argument("--reveal-to", choices=("ap", "all"))
    p.add_argument("--scheduler", choices=("async", "threads"))


def _resolve_config(args, split_manifest: dict | None = None) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    over = {"parties": "parties", "trees": "T", "depth": "D", "buckets": "B", "lam": "lam", "task": "task",
            "reveal_to": "reveal_predictions_to", "scheduler": "scheduler"}
    for flag, key in over.items():
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = {**cfg.seeds, "dealer": args.seed}
    if getattr(args, "paper_faithful", False):
        cfg.paper_faithful()
    if split_manifest is not None:
        n = len(split_manifest["parties"])
        if cfg.parties != n:
            if args.parties is not None or args.config:
                raise ConfigurationError(f"config says {cfg.parties} parties but the split has {n}")
            cfg.parties = n
        ap = split_manifest["active_party"]
        if cfg.roles and cfg.active_party != ap:
            raise ConfigurationError(f"config names party {cfg.active_party} as AP, split labels are at {ap}")
        if not cfg.roles:
            cfg.roles = {str(m): ("AP" if m == ap else "PP") for m in range(1, n + 1)}
    cfg.validate()
    return cfg


def _prepare_labels(cfg: RunConfig, y: np.ndarray):
    if cfg.task == "classification":
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ConfigurationError("classification labels must be 0 or 1")
        return y, None
    scaler = D.LabelScaler.fit(y)
    return scaler.transform(y), scaler


def _with_labels(parts, labels, ap):
    return [D.PartyData(p.columns, p.feature_ids, labels if m == ap else None, p.names)
            for m, p in enumerate(parts, start=1)]


def _concat_columns(parts) -> np.ndarray:
    return np.concatenate([p.columns for p in parts], axis=1)


# -- commands -------------------------------------------------------------

def cmd_export_dataset(args) -> int:
    if args.name != "breast-cancer":
        raise ConfigurationError(f"unknown bundled dataset {args.name!r}")
    t = D.breast_cancer()
    D.write_csv(args.out, t.names, t.X, t.y, t.label)
    print(f"wrote {args.out}: {t.X.shape[0]} rows, {t.X.shape[1]} features, label {t.label!r}")
    return 0


def cmd_gen_synth(args) -> int:
    t = D.synthetic(args.samples, args.features, args.task, args.seed, args.informative)
    D.write_csv(args.out, t.names, t.X, t.y, t.label)
    print(f"wrote {args.out}: {args.samples} x {args.features} ({args.task}), label 'label'")
    return 0


def cmd_split_dataset(args) -> int:
    man = D.split_dataset(args.csv, args.out, args.parties, label=args.label, seed=args.seed,
                          train_fraction=args.train_fraction, active_party=args.active_party)
    counts = "/".join(str(len(p["columns"])) for p in man["parties"])
    print(f"split into {args.parties} parties ({counts} columns), rows train/test "
          f"{man['rows']['train']}/{man['rows']['test']} -> {args.out}")
    return 0


def _train(args, out: Path, mode: str) -> dict:
    parts, labels, split_man = D.load_split(args.data, "train")
    cfg = _resolve_config(args, split_man)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.json")
    y, scaler = _prepare_labels(cfg, labels)
    hyper = cfg.hyper()
    timing = {}
    manifest = {"data": str(Path(args.data).resolve()), "mode": mode, "seeds": cfg.seeds,
                "config": "config.json", "outputs": {}}
    if mode in ("plaintext", "both"):
        t0 = time.perf_counter()
        tables = O.train_plain_ensemble(_concat_columns(parts), y, hyper)
        timing["plaintext_train_s"] = time.perf_counter() - t0
        O.dump_plain(tables, out / "plain_model.json")
        manifest["outputs"]["plaintext_model"] = "plain_model.json"
    if mode in ("secure", "both"):
        datasets = _with_labels(parts, y, cfg.active_party)
        t0 = time.perf_counter()
        res = train_ensemble(datasets, hyper, approx=cfg.approx(), adaptive_init=cfg.adaptive_newton_init,
                             active_party=cfg.active_party, seed=cfg.dealer_seed, party_seeds=cfg.party_seeds,
                             fxp=cfg.fxp(), trunc_method=cfg.truncation, scheduler=cfg.scheduler,
                             audit=args.audit, latency=cfg.latency_s, bandwidth_bps=cfg.bandwidth_bps,
                             label_meta=scaler.to_dict() if scaler else None)
        timing["secure_train_s"] = time.perf_counter() - t0
        save_model(res.ensemble, out / "model", cfg.precision_bits)
        report = res.network.stats.report()
        _dump(out / "traffic.json", report)
        figs = out / "figures"
        figs.mkdir(exist_ok=True)
        plots.traffic_breakdown(report["per_op"], figs / "traffic.png")
        manifest["outputs"].update({"model": "model", "traffic": "traffic.json"})
        if args.audit:
            audit = transcript_audit(res.network, forbidden_words(datasets, res.ensemble, cfg.fxp()))
            _dump(out / "audit.json", {"clean": audit.clean, "frames_scanned": audit.frames_scanned,
                                       "hits": audit.hits[:100], "hit_count": len(audit.hits)})
            manifest["outputs"]["audit"] = "audit.json"
            print(f"transcript audit: {'clean' if audit.clean else f'{len(audit.hits)} hits'}")
        t = report["totals"]
        print(f"secure training: {t['rounds']} rounds, {t['bytes'] / 1e6:.1f} MB, "
              f"modeled {report['modeled_seconds']:.1f} s")
    _dump(out / "timing.json", timing)
    _dump(out / "manifest.json", manifest)
    return manifest


def cmd_train(args) -> int:
    _train(args, Path(args.out), args.mode)
    print(f"artifacts in {args.out}")
    return 0


def _secure_scores(run: Path, args, split: str, per_round: bool):
    ens = load_model(run / "model")
    parts, _labels, _ = D.load_split(args.data, split)
    cfg = RunConfig.load(run / "config.json")
    reveal = getattr(args, "reveal_to", None) or cfg.reveal_predictions_to
    res = predict(ens, parts, reveal_to=reveal, seed=cfg.dealer_seed, per_round=per_round, fxp=cfg.fxp())
    return ens, res, reveal


def cmd_predict(args) -> int:
    run, out = Path(args.run), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ens, res, reveal = _secure_scores(run, args, args.split, False)
    scaler = D.LabelScaler.from_dict(ens.label_meta)
    for m, scores in enumerate(res.scores, start=1):
        with open(out / f"party{m}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["score"] if ens.hyper.task == "classification" else ["prediction"])
            if scores is None:
                continue
            vals = scores if scaler is None or m != ens.active_party else scaler.inverse(scores)
            for v in vals:
                w.writerow([repr(float(v))])
    print(f"predictions revealed to {reveal}; files in {out}")
    return 0


def _evaluate(run: Path, args) -> dict:
    cfg = RunConfig.load(run / "config.json")
    man = json.loads((run / "manifest.json").read_text())
    parts, labels, _ = D.load_split(args.data, args.split)
    task = cfg.task
    metric = "rmse" if task == "regression" else "auc"
    result, curves = {}, {}
    scaler = None
    if task == "regression":
        _, tr_labels, _ = D.load_split(args.data, "train")
        scaler = D.LabelScaler.fit(tr_labels)

    def score(pred):
        return M.evaluate(pred if scaler is None else scaler.inverse(pred), labels, task)

    if "plaintext_model" in man["outputs"]:
        tables = O.load_plain(run / man["outputs"]["plaintext_model"])
        X = _concat_columns(parts)
        running = np.zeros(len(labels))
        series = []
        for t in tables:
            running = running + O.infer_plain(t, X)
            series.append(score(running)[metric])
        result["plaintext"] = score(running)
        curves["plaintext"] = series
    if "model" in man["outputs"]:
        ens, res, _ = _secure_scores(run, argparse.Namespace(data=args.data, reveal_to="ap"), args.split, True)
        curve = res.per_round[ens.active_party - 1]
        result["secure"] = score(curve[-1])
        curves["secure"] = [score(row)[metric] for row in curve]
        result["secure_prediction_traffic"] = res.network.stats.report()["totals"]
    if "plaintext" in result and "secure" in result:
        result["delta"] = {k: result["secure"][k] - result["plaintext"][k] for k in result["plaintext"]}
    result["task"] = task
    result["split"] = args.split
    _dump(run / "metrics.json", result)
    if curves:
        n = max(len(v) for v in curves.values())
        with open(run / "curves.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = sorted(curves)
            w.writerow(["tables"] + [f"{k}_{metric}" for k in keys])
            for i in range(n):
                w.writerow([i + 1] + [repr(curves[k][i]) if i < len(curves[k]) else "" for k in keys])
        figs = run / "figures"
        figs.mkdir(exist_ok=True)
        plots.learning_curves(list(range(1, n + 1)), curves, metric, figs / "curves.png")
    return result


def cmd_eval(args) -> int:
    result = _evaluate(Path(args.run), args)
    for mode in ("plaintext", "secure"):
        if mode in result:
            print(mode, " ".join(f"{k}={v:.4f}" for k, v in result[mode].items() if isinstance(v, float)))
    return 0


def cmd_run(args) -> int:
    """Train (both modes by default) and evaluate in one go."""
    _train(args, Path(args.out), args.mode)
    args.run = args.out
    return cmd_eval(args)


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = [int(v) for v in args.values.split(",")]
    rows = []
    for v in values:
        N, J, depth = args.samples, args.features, args.depth
        if args.vary == "N":
            N = v
        elif args.vary == "J":
            J = v
        else:
            depth = v
        t = D.synthetic(N, J, args.task, args.seed)
        y = t.y if args.task == "classification" else D.LabelScaler.fit(t.y).transform(t.y)
        parts = D.partition(t.X, y, args.parties)
        hyper = BoostHyperparams(trees=args.trees, depth=depth, buckets=args.buckets, task=args.task)
        t0 = time.perf_counter()
        res = train_ensemble(parts, hyper, seed=args.seed)
        wall = time.perf_counter() - t0
        tot = res.network.stats.report()
        rows.append({"N": N, "J": J, "D": depth, "rounds": tot["totals"]["rounds"], "bytes": tot["totals"]["bytes"],
                     "modeled_seconds": tot["modeled_seconds"], "wall_seconds": wall})
        print(f"{args.vary}={v}: {rows[-1]['bytes'] / 1e6:.1f} MB, {rows[-1]['rounds']} rounds, {wall:.1f} s")
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    xs = [r[args.vary] for r in rows]
    figs = out / "figures"
    figs.mkdir(exist_ok=True)
    plots.scaling(xs, [r["bytes"] / 1e6 for r in rows], args.vary, "MB", figs / "bench_bytes.png",
                  fit=args.vary != "D", logy=args.vary == "D")
    plots.scaling(xs, [r["wall_seconds"] for r in rows], args.vary, "wall seconds", figs / "bench_time.png",
                  fit=args.vary != "D", logy=args.vary == "D")
    _dump(out / "bench.json", rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vfltables", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("export-dataset", help="write a bundled dataset to CSV")
    s.add_argument("--name", default="breast-cancer")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_export_dataset)

    s = sub.add_parser("gen-synth", help="generate a synthetic CSV")
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--features", type=int, required=True)
    s.add_argument("--task", choices=("regression", "classification"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--informative", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_synth)

    s = sub.add_parser("split-dataset", help="partition a CSV vertically with an 80/20 row split")
    s.add_argument("--csv", required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--parties", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--train-fraction", type=float, default=0.8)
    s.add_argument("--active-party", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_split_dataset)

    for name, fn, helptext in (("train", cmd_train, "train and write model + traffic report"),
                               ("run", cmd_run, "train then evaluate"),
                               ("baseline", cmd_run, "plaintext centralized baseline (train + eval)")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--data", required=True, help="directory written by split-dataset")
        s.add_argument("--out", required=True)
        s.add_argument("--mode", choices=("secure", "plaintext", "both"),
                       default="plaintext" if name == "baseline" else ("secure" if name == "train" else "both"))
        s.add_argument("--audit", action="store_true", help="record frames and scan for private values")
        if name != "train":
            s.add_argument("--split", default="test")
        _add_model_flags(s)
        s.set_defaults(fn=fn)

    s = sub.add_parser("predict", help="secure prediction with a trained model")
    s.add_argument("--run", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--reveal-to", choices=("ap", "all"))
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_predict)

    s = sub.add_parser("eval", help="metrics, secure-vs-plaintext deltas and learning curves")
    s.add_argument("--run", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("bench", help="traffic and time versus N, J or D on synthetic data")
    s.add_argument("--vary", choices=("N", "J", "D"), default="N")
    s.add_argument("--values", default="1000,2000,4000")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--features", type=int, default=8)
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--trees", type=int, default=1)
    s.add_argument("--buckets", type=int, default=8)
    s.add_argument("--parties", type=int, default=3)
    s.add_argument("--task", choices=("regression", "classification"), default="regression")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigurationError, D.InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
