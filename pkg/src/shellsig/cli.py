"""Command-line entry point: ``shellsig <command> [options]``.

Commands: synth, preprocess, shells, pairs, train, eval, cross.

Numeric settings may come from a JSON config file (``--config`` or the
``SHELLSIG_CONFIG`` environment variable); explicit flags override it.
Exit status is 0 on success, 1 on data errors and 2 on usage errors; on
failure one JSON object ``{"error": ..., "message": ..., "command": ...}`` is
written to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, datasetkit, evalkit, imgcore, shellpipe
from .augment import AugmentConfig
from .errors import EmptyManifest, SignatureError
from .metriclearn import (
    ImageStore,
    ModelConfig,
    RoutingStore,
    ShellStore,
    TrainConfig,
    embed_pairs,
    load_model,
    train,
)

CONFIG_ENV = "SHELLSIG_CONFIG"
RECORDS_FILE = "records.csv"
META_FILE = "manifest.json"

log = logging.getLogger("shellsig")


class UsageError(Exception):
    pass


class JsonArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors also emit a JSON error line."""

    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("UsageError", message, self.prog)
        sys.exit(2)


def _emit_error(kind: str, message: str, command: str | None) -> None:
    print(json.dumps({"error": kind, "message": message, "command": command}), file=sys.stderr)


# --------------------------------------------------------------------------
# config handling


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file {p} does not exist")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return cfg


def _section(cfg: dict, name: str, cls, overrides: dict):
    """Build a dataclass from a config section, applying non-None overrides."""
    known = {f.name for f in fields(cls)}
    data = dict(cfg.get(name, {}))
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown keys in config section {name!r}: {', '.join(sorted(unknown))}")
    data.update({k: v for k, v in overrides.items() if v is not None and k in known})
    return cls(**data)


def _pick(cfg: dict, section: str, key: str, flag, default):
    if flag is not None:
        return flag
    return cfg.get(section, {}).get(key, default)


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"{what} {p} does not exist")
    return p


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} {p} does not exist")
    return p


# --------------------------------------------------------------------------
# synth


def cmd_synth(args, cfg) -> int:
    out = Path(args.out)
    recs = datasetkit.synth_generate(
        out,
        _pick(cfg, "synth", "writers", args.writers, 8),
        _pick(cfg, "synth", "genuine", args.genuine, 12),
        _pick(cfg, "synth", "forged", args.forged, 12),
        canvas=_pick(cfg, "synth", "canvas", args.canvas, imgcore.SIZE),
        seed=_pick(cfg, "synth", "seed", args.seed, 0),
    )
    print(f"wrote {len(recs)} signatures for {len({r.writer for r in recs})} writers to {out}")
    return 0


# --------------------------------------------------------------------------
# preprocess / shells


def _rel_stem(path: str, root: Path) -> Path:
    return Path(path).relative_to(root).with_suffix("")


def _write_records(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["writer_id", "kind", "dataset", "item", "source"])
        w.writerows(rows)


def _read_records(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _preprocess_one(job):
    src, dst, size = job
    gray, mask = imgcore.preprocess_signature(imgcore.read_gray(src), size)
    dst.mkdir(parents=True, exist_ok=True)
    imgcore.write_png(dst / "gray.png", gray)
    imgcore.write_png(dst / "mask.png", mask, binary=True)
    return str(dst)


def _run_jobs(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_preprocess(args, cfg) -> int:
    root = _require_dir(args.dataset, "dataset directory").resolve()
    recs = datasetkit.scan_dataset(root, args.layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    size = _pick(cfg, "preprocess", "size", args.size, imgcore.SIZE)
    jobs = [(r.path, out / _rel_stem(r.path, root), size) for r in recs]
    _run_jobs(_preprocess_one, jobs, args.workers)
    _write_records(out / RECORDS_FILE, [
        (r.writer_id, r.kind, r.dataset, _rel_stem(r.path, root).as_posix(), r.path) for r in recs
    ])
    print(f"preprocessed {len(recs)} signatures into {out}")
    return 0


def _shells_one(job):
    src, dst, prune = job
    gray = imgcore.read_gray(src / "gray.png")
    mask = imgcore.read_mask(src / "mask.png")
    shells, pressure, thick, _ = shellpipe.signature_features(gray, mask, prune)
    shellpipe.export_shell_record(shells, pressure, thick, dst)
    return str(dst)


def _prune_config(cfg, args) -> shellpipe.PruneConfig:
    return shellpipe.PruneConfig(
        opening=_pick(cfg, "prune", "opening", getattr(args, "opening", None), "cross"),
        hole_area=_pick(cfg, "prune", "hole_area", getattr(args, "hole_area", None), imgcore.DEFAULT_HOLE_AREA),
    )


def cmd_shells(args, cfg) -> int:
    src = _require_dir(args.input, "preprocess output")
    rec_file = _require_file(src / RECORDS_FILE, "records file")
    rows = _read_records(rec_file)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prune = _prune_config(cfg, args)
    jobs = [(src / r["item"], out / r["item"], prune) for r in rows]
    _run_jobs(_shells_one, jobs, args.workers)
    _write_records(out / RECORDS_FILE, [(r["writer_id"], r["kind"], r["dataset"], r["item"], r["source"]) for r in rows])
    (out / "prune.json").write_text(json.dumps({"opening": prune.opening, "hole_area": prune.hole_area}) + "\n")
    print(f"extracted shells for {len(rows)} signatures into {out}")
    return 0


# --------------------------------------------------------------------------
# pairs


def cmd_pairs(args, cfg) -> int:
    root = _require_dir(args.dataset, "dataset directory").resolve()
    layout = args.layout.upper()
    recs = datasetkit.scan_dataset(root, layout)
    pc = cfg.get("pairs", {})
    fractions = tuple(args.fractions) if args.fractions else tuple(pc.get("fractions", (2 / 3, 1 / 6, 1 / 6)))
    seed = _pick(cfg, "pairs", "seed", args.seed, 0)
    quota = datasetkit.DEFAULT_QUOTAS[layout]
    split = datasetkit.split_writers(recs, fractions, seed=seed, ordered=_pick(cfg, "pairs", "ordered", args.ordered, False))
    m = datasetkit.build_manifest(
        recs,
        split,
        genuine_pairs_per_writer=_pick(cfg, "pairs", "genuine_pairs", args.genuine_pairs, quota),
        forged_pairs_per_writer=_pick(cfg, "pairs", "forged_pairs", args.forged_pairs, quota),
        triplets_per_writer=_pick(cfg, "pairs", "triplets", args.triplets, quota),
        cross_writer_fraction=_pick(cfg, "pairs", "cross_fraction", args.cross_fraction, 0.2),
        seed=seed,
    )
    target = _pick(cfg, "pairs", "downsample", args.downsample, None)
    if target:
        for s in datasetkit.SPLITS:
            setattr(m, s, datasetkit.downsample_writers(m.pairs(s), target, seed=seed))
    m.check()
    out = m.save(args.out)
    meta = {"dataset_root": str(root), "layout": layout, "fractions": list(fractions), "seed": seed}
    (out / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for s in datasetkit.SPLITS:
        print(f"{s}: {len(m.writers[s])} writers, {len(m.pairs(s))} pairs, {len(m.triplets(s))} triplets")
    return 0


# --------------------------------------------------------------------------
# train / eval / cross


def _manifest_meta(d: Path) -> dict:
    p = d / META_FILE
    return json.loads(p.read_text()) if p.exists() else {}


def _make_store(model_cfg: ModelConfig, manifest_dirs, feature_dirs, cfg, augment=False):
    metas = [_manifest_meta(d) for d in manifest_dirs]
    roots = [m.get("dataset_root") for m in metas]
    feature_dirs = list(feature_dirs or [])
    if feature_dirs and len(feature_dirs) != len(manifest_dirs):
        raise UsageError("give one --features directory per manifest")
    if model_cfg.input_kind == "image":
        aug = _section(cfg, "augment", AugmentConfig, {"size": model_cfg.length}) if augment else None
        stores = [ImageStore(r, size=model_cfg.length, augment_cfg=aug) for r in roots]
    else:
        prune = _prune_config(cfg, argparse.Namespace())
        stores = [
            ShellStore(r, feature_dirs[i] if feature_dirs else None, prune=prune, size=model_cfg.length)
            for i, r in enumerate(roots)
        ]
    return stores[0] if len(stores) == 1 else RoutingStore(stores)


def _load_manifests(dirs) -> datasetkit.SplitManifest:
    parts = [datasetkit.SplitManifest.load(_require_dir(d, "manifest directory")) for d in dirs]
    names = [str(i) for i in range(len(parts))]
    return datasetkit.compose_groups(dict(zip(names, parts)), names)


def cmd_train(args, cfg) -> int:
    dirs = [Path(d) for d in args.manifest]
    manifest = _load_manifests(dirs)
    model_cfg = _section(cfg, "model", ModelConfig, {
        "arch": args.arch, "width_multiplier": args.width, "embedding_dim": args.embedding_dim,
        "l2_normalize": args.l2_normalize, "seed": args.seed, "dropout": args.dropout,
    })
    train_cfg = _section(cfg, "train", TrainConfig, {
        "loss": args.loss, "optimizer": args.optimizer, "lr": args.lr, "batch_size": args.batch_size,
        "epochs": args.epochs, "margin": args.margin, "patience": args.patience, "seed": args.seed,
    })
    store = _make_store(model_cfg, dirs, args.features, cfg, augment=args.augment)
    if train_cfg.loss == "triplet":
        tr, va = manifest.train_triplets, manifest.valid_triplets
    else:
        tr, va = manifest.train, manifest.valid
    out = Path(args.out)
    res = train(model_cfg, train_cfg, tr, va, store, out_dir=out, log=log.info)
    (out / "config.json").write_text(json.dumps(
        {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "manifests": [str(d) for d in dirs]},
        indent=2, sort_keys=True) + "\n")
    if not args.no_figures:
        from .plotting import plot_history

        plot_history({train_cfg.loss: res.history}, out / "history.png")
    last = res.history[-1]
    print(f"trained {len(res.history)} epochs; best epoch {res.best_epoch}; "
          f"final train {last.train_loss:.6f} valid {last.valid_loss:.6f}; checkpoint {res.checkpoint}")
    return 0


def _score(ckpt, manifest_dir: Path, split: str, features, cfg):
    model = load_model(_require_file(ckpt, "checkpoint"))
    m = datasetkit.SplitManifest.load(_require_dir(manifest_dir, "manifest directory"))
    pairs = m.pairs(split)
    if not pairs:
        raise EmptyManifest(f"manifest {manifest_dir} has no {split} pairs")
    store = _make_store(model.config, [manifest_dir], [features] if features else None, cfg)
    scored = embed_pairs(model, pairs, store)
    return [d for d, _ in scored], [y for _, y in scored]


def _write_eval_outputs(out: Path, name: str, d, y, report, bins: int, figures: bool):
    evalkit.write_scores_csv(out / f"{name}_scores.csv", d, y)
    evalkit.write_roc_csv(out / f"{name}_roc.csv", report.roc)
    hist = evalkit.distance_histogram(d, y, bins)
    evalkit.write_histogram_csv(out / f"{name}_histogram.csv", hist)
    if figures:
        from .plotting import plot_histogram

        plot_histogram(hist, out / f"{name}_histogram.png", title=f"{name} distances")


def _print_rows(rows):
    w = csv.writer(sys.stdout)
    w.writerow(["dataset", "pairs", "auc", "accuracy", "precision", "recall", "f1"])
    for r in rows:
        mt = r.metrics
        w.writerow([r.name, r.n_pairs, f"{r.auc:.6f}"] + ["" if v is None else f"{v:.6f}" for v in
                                                            (mt.accuracy, mt.precision, mt.recall, mt.f1)])


def cmd_eval(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d, y = _score(args.checkpoint, Path(args.manifest), args.split, args.features, cfg)
    name = args.name or Path(args.manifest).name
    report = evalkit.evaluate(d, y, name, args.threshold)
    evalkit.write_report_json(out / "report.json", report)
    _write_eval_outputs(out, name, d, y, report, args.bins, not args.no_figures)
    if not args.no_figures:
        from .plotting import plot_roc

        plot_roc({name: (report.roc, report.auc)}, out / "roc.png")
    _print_rows([report])
    return 0


def _parse_test(text: str):
    name, sep, rest = text.partition("=")
    if not sep or not name or not rest:
        raise UsageError(f"--test expects NAME=MANIFEST_DIR[:FEATURES_DIR], got {text!r}")
    manifest, _, feats = rest.partition(":")
    return name, Path(manifest), (Path(feats) if feats else None)


def cmd_cross(args, cfg) -> int:
    tests = [_parse_test(s) for s in args.test]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scored = {}
    for name, manifest, feats in tests:
        scored[name] = _score(args.checkpoint, manifest, args.split, feats, cfg)
    report = evalkit.cross_report(scored, args.threshold, args.group or "", args.train_sets or [])
    evalkit.write_report_json(out / "cross.json", report)
    evalkit.write_cross_csv(out / "cross.csv", report)
    for r in report.reports:
        d, y = scored[r.name]
        _write_eval_outputs(out, r.name, d, y, r, args.bins, not args.no_figures)
    if not args.no_figures:
        from .plotting import plot_roc

        plot_roc({r.name: (r.roc, r.auc) for r in report.reports}, out / "roc.png",
                 title=f"{args.group or 'model'} across datasets")
    _print_rows(report.reports)
    print(f"mean_auc,{report.mean_auc:.6f}")
    print(f"std_auc,{report.std_auc:.6f}")
    return 0


# --------------------------------------------------------------------------
# parser


def _fractions(text: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("fractions must be three comma-separated numbers") from exc
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("fractions must be three comma-separated numbers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=os.environ.get(CONFIG_ENV),
                        help=f"JSON config file (default: ${CONFIG_ENV} if set)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    p = JsonArgumentParser(prog="shellsig", description="Offline signature verification with shell features.")
    p.add_argument("--version", action="version", version=f"shellsig {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=JsonArgumentParser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic signature dataset (SYNTH layout)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--writers", type=int, help="number of writers (default 8)")
    s.add_argument("--genuine", type=int, help="genuine signatures per writer (default 12)")
    s.add_argument("--forged", type=int, help="forged signatures per writer (default 12)")
    s.add_argument("--canvas", type=int, help="canvas side in pixels (default 512)")
    s.add_argument("--seed", type=int, help="random seed (default 0)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", parents=[common], help="Otsu, crop and resize every signature of a dataset")
    s.add_argument("--dataset", required=True, help="dataset root directory")
    s.add_argument("--layout", required=True, type=str.upper, choices=datasetkit.LAYOUTS, help="directory layout")
    s.add_argument("--out", required=True, help="output directory (mirrors the dataset tree)")
    s.add_argument("--size", type=int, help="output side in pixels (default 512)")
    s.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("shells", parents=[common], help="extract shells, pressure and thickness CSVs")
    s.add_argument("--input", required=True, help="output directory of the preprocess command")
    s.add_argument("--out", required=True, help="output directory for per-signature CSV records")
    s.add_argument("--opening", choices=("cross", "square", "none"), help="opening structuring element (default cross)")
    s.add_argument("--hole-area", dest="hole_area", type=int, help="largest hole filled before thinning (default 64)")
    s.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    s.set_defaults(func=cmd_shells)

    s = sub.add_parser("pairs", parents=[common], help="writer-disjoint split and pair/triplet split files")
    s.add_argument("--dataset", required=True, help="dataset root directory")
    s.add_argument("--layout", required=True, type=str.upper, choices=datasetkit.LAYOUTS, help="directory layout")
    s.add_argument("--out", required=True, help="manifest output directory")
    s.add_argument("--fractions", type=_fractions, help="train,valid,test writer shares (default 2/3,1/6,1/6)")
    s.add_argument("--ordered", action="store_true", default=None, help="split by consecutive writer IDs")
    s.add_argument("--genuine-pairs", dest="genuine_pairs", type=int, help="genuine pairs per writer (default: per-layout quota)")
    s.add_argument("--forged-pairs", dest="forged_pairs", type=int, help="label-1 pairs per writer (default: per-layout quota)")
    s.add_argument("--triplets", type=int, help="triplets per writer (default: per-layout quota)")
    s.add_argument("--cross-fraction", dest="cross_fraction", type=float,
                   help="share of label-1 pairs and negatives taken from other writers (default 0.2)")
    s.add_argument("--downsample", type=int, help="cap pairs per writer after generation")
    s.add_argument("--seed", type=int, help="random seed (default 0)")
    s.set_defaults(func=cmd_pairs)

    s = sub.add_parser("train", parents=[common], help="train an embedding network")
    s.add_argument("--manifest", required=True, nargs="+", help="manifest directories (several are concatenated)")
    s.add_argument("--features", nargs="+", help="shells output directories, one per manifest")
    s.add_argument("--out", required=True, help="run directory for checkpoint and history")
    s.add_argument("--arch", choices=("psnet", "resnet1d", "smallcnn2d"), help="network (default psnet)")
    s.add_argument("--width", type=float, help="channel width multiplier (default 1.0)")
    s.add_argument("--embedding-dim", dest="embedding_dim", type=int, help="embedding size (default 512)")
    s.add_argument("--dropout", type=float, help="dropout rate before the head (default 0.5)")
    s.add_argument("--l2-normalize", dest="l2_normalize", action="store_true", default=None,
                   help="project embeddings onto the unit hypersphere (ablation)")
    s.add_argument("--loss", choices=("contrastive", "triplet"), help="loss (default contrastive)")
    s.add_argument("--optimizer", choices=("sgd", "momentum", "adam"), help="optimizer (default sgd)")
    s.add_argument("--lr", type=float, help="learning rate (default 0.001)")
    s.add_argument("--batch-size", dest="batch_size", type=int, help="batch size (default 32)")
    s.add_argument("--epochs", type=int, help="maximum epochs (default 20)")
    s.add_argument("--margin", type=float, help="loss margin (default 1.0)")
    s.add_argument("--patience", type=int, help="early-stopping patience in epochs (default 5)")
    s.add_argument("--augment", action="store_true", help="augment training images (image network only)")
    s.add_argument("--seed", type=int, help="random seed (default 0)")
    s.add_argument("--no-figures", action="store_true", help="skip the loss-history figure")
    s.set_defaults(func=cmd_train)

    def eval_flags(s):
        s.add_argument("--checkpoint", required=True, help="model checkpoint written by train")
        s.add_argument("--out", required=True, help="report directory")
        s.add_argument("--split", default="test", choices=datasetkit.SPLITS, help="manifest split (default test)")
        s.add_argument("--threshold", type=float, default=0.5, help="distance threshold for the confusion matrix")
        s.add_argument("--bins", type=int, default=20, help="histogram bins (default 20)")
        s.add_argument("--no-figures", action="store_true", help="write data files only")

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on one manifest")
    s.add_argument("--manifest", required=True, help="manifest directory")
    s.add_argument("--features", help="shells output directory for the manifest's dataset")
    s.add_argument("--name", help="dataset name in the report (default: manifest directory name)")
    eval_flags(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("cross", parents=[common], help="evaluate a checkpoint on several datasets")
    s.add_argument("--test", required=True, nargs="+", metavar="NAME=MANIFEST[:FEATURES]",
                   help="test datasets as name=manifest directory, optionally :shells directory")
    s.add_argument("--group", help="training group label for the report, e.g. CI")
    s.add_argument("--train-sets", dest="train_sets", nargs="+", help="training dataset names for the report")
    eval_flags(s)
    s.set_defaults(func=cmd_cross)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        for name in ("workers", "bins"):
            if getattr(args, name, 1) < 1:
                raise UsageError(f"--{name} must be at least 1")
        return args.func(args, cfg)
    except UsageError as exc:
        _emit_error("UsageError", str(exc), args.command)
        return 2
    except (SignatureError, OSError, ValueError, KeyError) as exc:
        _emit_error(type(exc).__name__, str(exc), args.command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
