"""Command-line front end: ``fatigue-merf <command> [options]``.

Commands
    extract           raw CSV bundle -> features.csv, feature_meta.json, extraction_log.json
    evaluate          k-fold CV of model configs -> report.json, table1.csv, fig1.csv
    synth streams     synthetic raw CSV bundle
    synth clustered   synthetic clustered regression benchmark
    fit               train one model on a feature table -> model.json
    predict           apply model.json to a feature table -> predictions.csv

Every command accepts ``--config``, ``--seed``, ``--out-dir`` and
``--threads``; flags override the config file. Outputs are staged and only
moved into ``--out-dir`` once all of them have been written.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import synth
from .config import ConfigError, load_config
from .evaluation import (Dataset, LinearModel, ModelConfig, cross_validate,
                         fit_linear_baseline, train_medians, write_reports)
from .features.extract import SegmentRejected, segment_features, write_features
from .ingest import MODALITIES, IngestError, build_segments, coverage, load_bundle, parse_subjects
from .merf import ClusterScheme, MerfModel, fit_merf
from .forest import RandomForest

log = logging.getLogger("fatigue_merf")

MODEL_FORMAT_VERSION = 1
COVERAGE_BINS = np.linspace(0.0, 1.0, 11)


class CommandError(Exception):
    pass


# ------------------------------------------------------------------ output staging

@contextlib.contextmanager
def staged_outputs(out_dir):
    """Yield a scratch directory; move its files into ``out_dir`` on success."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        yield scratch
        for item in sorted(scratch.iterdir()):
            os.replace(item, out_dir / item.name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


# ------------------------------------------------------------------ datasets

def read_table(path, subjects_csv=None, meta_json=None):
    """Load a feature table; returns (Dataset, id columns as a DataFrame).

    Two layouts are understood: extracted features
    (``subject_id,segment_start_ms,score,f0..``) and the clustered benchmark
    (``cluster,y,x0..``), whose cluster column becomes the dataset groups.
    """
    path = Path(path)
    if not path.exists():
        raise CommandError(f"feature table not found: {path}")
    df = pd.read_csv(path, dtype={"subject_id": str})
    if "cluster" in df.columns and "y" in df.columns:
        xcols = [c for c in df.columns if c.startswith("x") and c[1:].isdigit()]
        ds = Dataset(df[xcols].to_numpy(float), df["y"].to_numpy(float),
                     groups=df["cluster"].to_numpy(np.int64))
        return ds, df[["cluster", "y"]]
    if not {"subject_id", "score"} <= set(df.columns):
        raise CommandError(f"{path}: unrecognised feature table header")
    fcols = [c for c in df.columns if c.startswith("f") and c[1:].isdigit()]
    ds = Dataset(df[fcols].to_numpy(float), df["score"].to_numpy(float),
                 df["subject_id"].to_numpy(str))
    if subjects_csv is not None:
        table = parse_subjects(subjects_csv)
        missing = sorted(set(ds.subject_ids) - set(table))
        if missing:
            raise CommandError(f"no demographics for subjects {missing}")
        ds.ages = np.array([table[s].age for s in ds.subject_ids], float)
        ds.bmis = np.array([table[s].bmi for s in ds.subject_ids], float)
    if meta_json is not None:
        with open(meta_json, encoding="utf-8") as fh:
            ds.meta = json.load(fh)["features"]
    ids = df[[c for c in ("subject_id", "segment_start_ms", "score") if c in df.columns]]
    return ds, ids


def _need(value, what):
    if value is None:
        raise CommandError(f"no {what} given (flag or config)")
    return value


# ------------------------------------------------------------------ extract

def run_extract(cfg):
    input_dir = Path(_need(cfg.input_dir, "input directory"))
    subjects, streams, labels = load_bundle(input_dir, cfg.tz_offset_min)
    labelled = {lab.subject_id for lab in labels}
    known = set(subjects).union(*(set(s) for s in streams.values()))
    unlabelled = sorted(known - labelled)
    for sid in unlabelled:
        log.warning("subject %s has no fatigue labels; it contributes no data points", sid)

    segments = build_segments(streams, labels, cfg.tz_offset_min)
    points, rejections = [], []
    cov = {m.value: [] for m in MODALITIES}
    for seg in segments:
        for m, frac in coverage(seg, cfg.extraction.rates).fractions.items():
            cov[m].append(frac)
        try:
            points.append(segment_features(seg, cfg.extraction))
        except SegmentRejected as exc:
            rejections.append({"subject_id": seg.subject_id, "segment_start_ms": seg.start,
                               "reason": str(exc)})
    log.info("extracted %d of %d segments", len(points), len(segments))

    report = {
        "input_dir": input_dir.name,
        "n_labels": len(labels),
        "n_segments": len(segments),
        "accepted": len(points),
        "rejected": len(rejections),
        "rejections": rejections,
        "subjects_without_labels": unlabelled,
        "coverage_histograms": {
            m: {"edges": COVERAGE_BINS.tolist(),
                "counts": np.histogram(v, COVERAGE_BINS)[0].tolist()}
            for m, v in cov.items()},
        "valid_windows": [{"subject_id": p.subject_id, "segment_start_ms": p.segment_start,
                           **p.valid_windows} for p in points],
        "settings": asdict(cfg.extraction),
    }
    with staged_outputs(cfg.out_dir) as tmp:
        write_features(points, tmp / "features.csv", tmp / "feature_meta.json")
        with open(tmp / "extraction_log.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
    return [Path(cfg.out_dir) / n for n in ("features.csv", "feature_meta.json",
                                            "extraction_log.json")]


# ------------------------------------------------------------------ evaluate

def run_evaluate(cfg, models=None):
    models = [ModelConfig(m) for m in (models or cfg.cv.models)]
    needs_demo = any(m.is_merf and m is not ModelConfig.MERF_GROUP for m in models)
    if needs_demo and cfg.subjects is None:
        raise CommandError("MERF configs need demographics: give --subjects")
    ds, _ = read_table(_need(cfg.features, "feature table"),
                       cfg.subjects if needs_demo else None, cfg.meta)
    reports = []
    for m in models:
        log.info("cross-validating %s", m.value)
        reports.append(cross_validate(ds, m, cfg.cv.k, cfg.seed, cfg.cv.split,
                                      forest=cfg.forest, merf=cfg.merf_params(),
                                      ridge=cfg.cv.ridge, n_bins=cfg.n_bins,
                                      threads=cfg.threads))
    with staged_outputs(cfg.out_dir) as tmp:
        write_reports(reports, tmp, ds.meta, cfg.cv.top_k)
    return [Path(cfg.out_dir) / n for n in ("report.json", "table1.csv", "fig1.csv")]


# ------------------------------------------------------------------ fit / predict

def _clusters_for(ds, config, scheme):
    if config is ModelConfig.MERF_GROUP:
        if ds.groups is None:
            raise CommandError("MERF_GROUP needs a table with a cluster column")
        return ds.groups
    return np.array([scheme.assign(a, b) for a, b in zip(ds.ages, ds.bmis)])


def run_fit(cfg, model):
    config = ModelConfig(model)
    needs_demo = config.is_merf and config is not ModelConfig.MERF_GROUP
    if needs_demo and cfg.subjects is None:
        raise CommandError(f"{config.value} needs demographics: give --subjects")
    ds, _ = read_table(_need(cfg.features, "feature table"),
                       cfg.subjects if needs_demo else None)
    med = train_medians(ds.X)
    X = np.where(np.isfinite(ds.X), ds.X, med)
    forest = replace(cfg.forest, seed=cfg.seed)
    if config is ModelConfig.LINEAR:
        lm = fit_linear_baseline(X, ds.y, cfg.cv.ridge)
        body = {"weights": lm.weights.tolist(), "intercept": lm.intercept}
    elif config is ModelConfig.RF:
        body = RandomForest(forest).fit(X, ds.y, threads=cfg.threads).to_dict()
    else:
        scheme = None
        if needs_demo:
            scheme = ClusterScheme(config.cluster_mode, cfg.n_bins)
            _, first = np.unique(ds.subject_ids, return_index=True)
            scheme.fit(ds.ages[first], ds.bmis[first])
        clusters = _clusters_for(ds, config, scheme)
        model_ = fit_merf(X, ds.y, clusters, replace(cfg.merf, forest=forest), cfg.threads)
        model_.scheme = scheme
        body = model_.to_dict()
    doc = {"format": "fatigue_merf.model", "version": MODEL_FORMAT_VERSION,
           "config": config.value, "n_features": int(ds.X.shape[1]),
           "medians": med.tolist(), "model": body}
    with staged_outputs(cfg.out_dir) as tmp:
        with open(tmp / "model.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
    return [Path(cfg.out_dir) / "model.json"]


def run_predict(cfg, model_path):
    with open(model_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "fatigue_merf.model" or doc.get("version") != MODEL_FORMAT_VERSION:
        raise CommandError(f"{model_path}: not a model file of version {MODEL_FORMAT_VERSION}")
    config = ModelConfig(doc["config"])
    needs_demo = config.is_merf and config is not ModelConfig.MERF_GROUP
    if needs_demo and cfg.subjects is None:
        raise CommandError(f"{config.value} model needs demographics: give --subjects")
    ds, ids = read_table(_need(cfg.features, "feature table"),
                         cfg.subjects if needs_demo else None)
    if ds.X.shape[1] != doc["n_features"]:
        raise CommandError(f"model expects {doc['n_features']} features, "
                           f"table has {ds.X.shape[1]}")
    med = np.asarray(doc["medians"], float)
    X = np.where(np.isfinite(ds.X), ds.X, med)
    if config is ModelConfig.LINEAR:
        body = doc["model"]
        pred = LinearModel(np.asarray(body["weights"], float), body["intercept"]).predict(X)
    elif config is ModelConfig.RF:
        pred = RandomForest.from_dict(doc["model"]).predict(X)
    else:
        model = MerfModel.from_dict(doc["model"])
        pred = model.predict(X, _clusters_for(ds, config, model.scheme))
    out = ids.copy()
    out["prediction"] = [repr(float(v)) for v in pred]
    with staged_outputs(cfg.out_dir) as tmp:
        out.to_csv(tmp / "predictions.csv", index=False, lineterminator="\n")
    return [Path(cfg.out_dir) / "predictions.csv"]


# ------------------------------------------------------------------ synth

def run_synth_streams(cfg, n_subjects, days, missingness):
    with staged_outputs(cfg.out_dir) as tmp:
        synth.gen_streams(tmp, n_subjects, days, cfg.seed, missingness)
        # the bundle config points at the final location, not the scratch dir
        text = (tmp / "bundle.toml").read_text(encoding="utf-8")
        final = Path(cfg.out_dir).resolve().as_posix()
        (tmp / "bundle.toml").write_text(text.replace(tmp.resolve().as_posix(), final),
                                         encoding="utf-8")
    return [Path(cfg.out_dir) / n for n in ("subjects.csv", "rr.csv", "accel.csv", "temp.csv",
                                            "resp.csv", "labels.csv", "bundle.toml")]


def run_synth_clustered(cfg, n_clusters, per_cluster, sigma_b, sigma_e, fixed_effect):
    spec = synth.SynthSpec(n_clusters, per_cluster, fixed_effect, sigma_b, sigma_e, cfg.seed)
    spec.validate()
    with staged_outputs(cfg.out_dir) as tmp:
        synth.write_clustered(spec, tmp)
    return [Path(cfg.out_dir) / n for n in ("synth_features.csv", "synth_truth.json")]


# ------------------------------------------------------------------ argument parsing

def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    g = parser.add_argument_group("global options")
    g.add_argument("--config", type=Path, default=default, help="TOML config file")
    g.add_argument("--seed", type=int, default=default, help="master seed")
    g.add_argument("--out-dir", type=Path, default=default, help="output directory")
    g.add_argument("--threads", type=int, default=default, help="worker threads")
    g.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False, help="log progress")


def _data_flags(parser):
    parser.add_argument("--features", type=Path, help="feature table (CSV)")
    parser.add_argument("--subjects", type=Path, help="subjects.csv with age and BMI")
    parser.add_argument("--meta", type=Path, help="feature_meta.json (modality tags)")


def build_parser():
    parser = argparse.ArgumentParser(prog="fatigue-merf",
                                     description="Wearable fatigue features and MERF models.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("extract", help="raw CSV bundle -> feature table")
    _global_flags(p, suppress=True)
    p.add_argument("--input-dir", type=Path, help="directory with the six CSV files")
    p.add_argument("--tz-offset-min", type=int, help="label timezone offset in minutes")

    p = sub.add_parser("evaluate", help="cross-validate model configs")
    _global_flags(p, suppress=True)
    _data_flags(p)
    p.add_argument("--models", nargs="+", choices=[m.value for m in ModelConfig],
                   help="model configs (default: the five standard ones)")
    p.add_argument("--k", type=int, help="number of folds")
    p.add_argument("--split", choices=["record", "subject"], help="fold unit")

    p = sub.add_parser("fit", help="train and serialise one model")
    _global_flags(p, suppress=True)
    _data_flags(p)
    p.add_argument("--model", required=True, choices=[m.value for m in ModelConfig])

    p = sub.add_parser("predict", help="apply a serialised model")
    _global_flags(p, suppress=True)
    _data_flags(p)
    p.add_argument("--model", required=True, type=Path, help="model.json from `fit`")

    p = sub.add_parser("synth", help="synthetic data generators")
    _global_flags(p, suppress=True)
    kinds = p.add_subparsers(dest="kind", required=True, metavar="kind")
    s = kinds.add_parser("streams", help="raw multimodal CSV bundle")
    _global_flags(s, suppress=True)
    s.add_argument("--subjects", type=int, required=True)
    s.add_argument("--days", type=int, required=True)
    s.add_argument("--missingness", type=float, default=0.0)
    c = kinds.add_parser("clustered", help="clustered regression benchmark")
    _global_flags(c, suppress=True)
    c.add_argument("--clusters", type=int, required=True)
    c.add_argument("--per-cluster", type=int, required=True)
    c.add_argument("--sigma-b", type=float, required=True)
    c.add_argument("--sigma-e", type=float, required=True)
    c.add_argument("--fixed-effect", choices=[f.value for f in synth.FixedEffect],
                   default=synth.FixedEffect.FRIEDMAN1.value)
    return parser


def _resolve(args):
    cfg = load_config(args.config)
    for flag in ("seed", "threads"):
        if getattr(args, flag) is not None:
            setattr(cfg, flag, getattr(args, flag))
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    for flag in ("input_dir", "features", "meta"):
        if getattr(args, flag, None) is not None:
            setattr(cfg, flag, getattr(args, flag))
    if args.command != "synth" and getattr(args, "subjects", None) is not None:
        cfg.subjects = args.subjects
    if getattr(args, "tz_offset_min", None) is not None:
        cfg.tz_offset_min = args.tz_offset_min
    if getattr(args, "k", None) is not None:
        cfg.cv = replace(cfg.cv, k=args.k)
    if getattr(args, "split", None) is not None:
        cfg.cv = replace(cfg.cv, split=args.split)
    return cfg.validate()


def dispatch(args):
    cfg = _resolve(args)
    if args.command == "extract":
        return run_extract(cfg)
    if args.command == "evaluate":
        return run_evaluate(cfg, args.models)
    if args.command == "fit":
        return run_fit(cfg, args.model)
    if args.command == "predict":
        return run_predict(cfg, args.model)
    if args.kind == "streams":
        return run_synth_streams(cfg, args.subjects, args.days, args.missingness)
    return run_synth_clustered(cfg, args.clusters, args.per_cluster, args.sigma_b,
                               args.sigma_e, args.fixed_effect)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        written = dispatch(args)
    except (CommandError, ConfigError, IngestError, ValueError, OSError) as exc:
        print(f"fatigue-merf: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
