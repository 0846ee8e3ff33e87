"""``darkbanner`` command line: clean, cluster, train, evaluate, run-all.

Every stage reads and writes files in the output directory, so each stage can
be re-run on its own. Exit codes: 0 success, 2 input schema, 3 clustering,
4 evaluation/split mismatch, 5 refusal to overwrite or a locked output
directory, 1 anything else.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset_io as dio
from . import pipeline as pl
from .config import RunConfig, load_config
from .embed_cluster import cluster_phrases
from .errors import DarkBannerError, OutputLocked, OverwriteRefused
from .text_prep import EXTERNAL, TextProvider, TextService, load_lexicon
from .tree_learn import load_model, save_model

log = logging.getLogger("darkbanner")

CLEANED = "cleaned.csv"
LOAD_REPORT = "load_report.json"
CLUSTERS = "clusters.csv"
CENTROIDS = "centroids.json"
MODELS_DIR = "models"
ENCODER = "encoder.json"
TRAIN_SUMMARY = "train_summary.json"
REPORT = "report.json"
ACCURACY_CSV = "accuracy.csv"
CONFUSION_CSV = "confusion_matrices.csv"
IMPORTANCE_CSV = "importances.csv"
HISTOGRAM_CSV = "label_histogram.csv"
MULTI_SEED_CSV = "multi_seed.csv"
LOCK = ".darkbanner.lock"

STAGE_OUTPUTS = {
    "clean": [CLEANED, LOAD_REPORT],
    "cluster": [CLUSTERS, CENTROIDS],
    "train": [ENCODER, TRAIN_SUMMARY] + [f"{MODELS_DIR}/{p}.json" for p in dio.PATTERNS],
    "evaluate": [REPORT, ACCURACY_CSV, CONFUSION_CSV, IMPORTANCE_CSV, HISTOGRAM_CSV, MULTI_SEED_CSV],
}


# -- file helpers -------------------------------------------------------------


def _stamp(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed}


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _write_csv(path: Path, cfg: RunConfig, header: list[str], rows) -> None:
    buf = io.StringIO()
    stamp = _stamp(cfg)
    buf.write(f"# darkbanner config_hash={stamp['config_hash']} seed={stamp['seed']}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _read_csv(path: Path) -> list[dict]:
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines(keepends=True) if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(lines))))


def _check_overwrite(out: Path, stages, force: bool) -> None:
    if force:
        return
    for stage in stages:
        for name in STAGE_OUTPUTS[stage]:
            if (out / name).exists():
                raise OverwriteRefused(f"{out / name} exists; pass --force to overwrite")


@contextlib.contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLocked(f"{out} is in use by another darkbanner process (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _service(cfg: RunConfig) -> TextService:
    lexicon = load_lexicon(cfg.lexicon) if cfg.lexicon else None
    provider = TextProvider.from_env(EXTERNAL) if cfg.provider == EXTERNAL else TextProvider()
    return TextService(provider=provider, lexicon=lexicon, fallback=cfg.provider_fallback)


def _load_cleaned(cfg: RunConfig) -> list[dio.BannerRecord]:
    path = Path(cfg.output_dir) / CLEANED
    if not path.exists():
        raise DarkBannerError(f"{path} not found; run the clean stage first")
    records, _ = dio.load_raw_csv(path, dio.load_column_map(cfg.column_map))
    return dio.clean_corpus(records)


def _load_clusters(cfg: RunConfig) -> dict[str, int | None]:
    path = Path(cfg.output_dir) / CLUSTERS
    if not path.exists():
        raise DarkBannerError(f"{path} not found; run the cluster stage first")
    return {row["site_id"]: (int(row["cluster_id"]) if row["cluster_id"] else None) for row in _read_csv(path)}


def _features(cfg: RunConfig, records, service=None):
    return pl.build_feature_vectors(records, _load_clusters(cfg), service or _service(cfg))


# -- stages -------------------------------------------------------------------


def cmd_clean(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    _check_overwrite(out, ["clean"], cfg.force)
    cmap = dio.load_column_map(cfg.column_map)
    records, report = dio.load_raw_csv(cfg.input_csv, cmap)
    cleaned = dio.clean_corpus(records)
    labels = dio.label_corpus(cleaned, report)
    stamp = _stamp(cfg)
    text = dio.write_records_csv(
        cleaned, cmap, header_comment=f"darkbanner config_hash={stamp['config_hash']} seed={stamp['seed']}"
    )
    out.mkdir(parents=True, exist_ok=True)
    (out / CLEANED).write_text(text, encoding="utf-8")
    data = report.as_dict()
    data["path"] = Path(cfg.input_csv).name
    data.update(stamp)
    data["label_histogram"] = dio.label_histogram(labels)
    data["notes"] = {r.site_id: dict(sorted(r.notes.items())) for r in cleaned if r.notes}
    _write_json(out / LOAD_REPORT, data)
    log.info("cleaned %d records (%d malformed cells, %d malformed rows)",
             len(cleaned), len(report.malformed_cells), len(report.malformed_rows))
    return data


def cmd_cluster(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    _check_overwrite(out, ["cluster"], cfg.force)
    records = _load_cleaned(cfg)
    service = _service(cfg)
    phrases = [(r.site_id, service.translate(r.not_yes_text)) for r in records]
    present = [(sid, p) for sid, p in phrases if p.strip()]
    result = cluster_phrases([p for _, p in present], k=cfg.k_clusters, seed=cfg.seed)
    by_site = dict(zip((sid for sid, _ in present), result.assignments))
    rows = []
    for sid, phrase in phrases:
        a = by_site.get(sid)
        if a is None:
            rows.append([sid, phrase, "", "", ""])
        else:
            rows.append([sid, phrase, a.cluster_id, a.projected_xy[0], a.projected_xy[1]])
    _write_csv(out / CLUSTERS, cfg, ["site_id", "phrase", "cluster_id", "x", "y"], rows)
    km, pca = result.kmeans, result.pca
    sizes = np.bincount([a.cluster_id for a in result.assignments], minlength=km.k)
    data = {
        **_stamp(cfg),
        "format_version": pl.REPORT_FORMAT_VERSION,
        "k": km.k,
        "inertia": km.inertia,
        "iterations_run": km.iterations_run,
        "winning_restart": km.restart,
        "cluster_sizes": sizes.tolist(),
        "centroids": km.centroids.tolist(),
        "centroids_xy": result.centroid_xy.tolist(),
        "pca_explained_variance": pca.explained_variance.tolist(),
        "pca_degenerate": pca.degenerate,
        "text_provenance": service.provenance(),
    }
    _write_json(out / CENTROIDS, data)
    log.info("clustered %d phrases into %d clusters", len(present), km.k)
    return data


def cmd_train(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    _check_overwrite(out, ["train"], cfg.force)
    records = _load_cleaned(cfg)
    labels = dio.label_corpus(records)
    service = _service(cfg)
    vectors = _features(cfg, records, service)
    split = dio.split_train_test(len(records), cfg.train_fraction, cfg.seed)
    matrix = pl.encode_features(vectors, split.train_ids, cfg.k_clusters)
    trained = pl.train_all(matrix, labels, split, cfg.grid, cfg.seed)
    stamp = _stamp(cfg)
    for pattern, t in trained.items():
        t.model.provenance.update(stamp)
        save_model(t.model, out / MODELS_DIR / f"{pattern}.json")
    _write_json(out / ENCODER, {**matrix.encoder.as_dict(), **stamp})
    summary = {
        **stamp,
        "format_version": pl.REPORT_FORMAT_VERSION,
        "split": split.as_dict(),
        "split_hash": pl.split_hash(split),
        "grid": cfg.grid.as_dict(),
        "patterns": {
            p: {
                "learning_rate": t.model.learning_rate,
                "n_estimators": t.model.n_estimators,
                "degenerate": t.degenerate,
                "grid_search": t.grid,
                "published_reference_cell": list(pl.PUBLISHED_BEST_CELL),
            }
            for p, t in trained.items()
        },
        "text_provenance": service.provenance(),
    }
    _write_json(out / TRAIN_SUMMARY, summary)
    log.info("trained %d pattern models", len(trained))
    return summary


def cmd_evaluate(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    _check_overwrite(out, ["evaluate"], cfg.force)
    records = _load_cleaned(cfg)
    labels = dio.label_corpus(records)
    vectors = _features(cfg, records)
    split = dio.split_train_test(len(records), cfg.train_fraction, cfg.seed)
    encoder = pl.Encoder.from_dict(json.loads((out / ENCODER).read_text(encoding="utf-8")))
    matrix = pl.EncodedMatrix(encoder.transform(vectors), encoder.columns, encoder.imputation_values, encoder)
    models = {p: load_model(out / MODELS_DIR / f"{p}.json") for p in dio.PATTERNS}
    results = pl.evaluate(models, matrix, labels, split)
    importances = pl.pattern_importances(matrix, labels, split, cfg.seed, cfg.importance_trees)
    multi = pl.multi_seed_summary(vectors, labels, cfg.seeds, cfg.train_fraction, cfg.grid, cfg.k_clusters)
    stamp = _stamp(cfg)
    report = {
        **stamp,
        "format_version": pl.REPORT_FORMAT_VERSION,
        "config": cfg.to_text(hashed_only=True),
        "n_records": len(records),
        "split": split.as_dict(),
        "split_hash": pl.split_hash(split),
        "label_histogram": pl.histogram_report(labels),
        "patterns": results,
        "feature_importances": importances,
        "multi_seed": multi,
    }
    _write_json(out / REPORT, report)
    _write_report_csvs(out, cfg, report)
    log.info("evaluated; weighted accuracy %s",
             ", ".join(f"{p}={results[p]['weighted_accuracy']:.3f}" for p in dio.PATTERNS))
    return report


def _write_report_csvs(out: Path, cfg: RunConfig, report: dict) -> None:
    pats = report["patterns"]
    summary = report["multi_seed"]["summary"]
    _write_csv(
        out / ACCURACY_CSV, cfg,
        ["pattern", "weighted_accuracy", "majority_baseline_accuracy", "published_reference_accuracy",
         "multi_seed_mean", "multi_seed_std", "learning_rate", "n_estimators", "degenerate"],
        [[p, pats[p]["weighted_accuracy"], pats[p]["majority_baseline_accuracy"], pats[p]["published_reference_accuracy"],
          summary[p]["mean"], summary[p]["std"], pats[p]["learning_rate"], pats[p]["n_estimators"],
          str(pats[p]["degenerate"]).lower()] for p in dio.PATTERNS],
    )
    rows = []
    for p in dio.PATTERNS:
        cm = pats[p]["confusion_matrix"]
        for i, row in enumerate(cm["matrix"]):
            rows.append([p, i, *row, sum(cm["counts"][i]), str(i in cm["empty_rows"]).lower()])
    _write_csv(out / CONFUSION_CSV, cfg,
               ["pattern", "actual", "predicted_0", "predicted_1", "predicted_2", "n_actual", "empty_row"], rows)
    rows = []
    for p in dio.PATTERNS:
        for name, v in report["feature_importances"][p]["features"].items():
            rows.append([p, "feature", name, v])
        for name, v in report["feature_importances"][p]["columns"].items():
            rows.append([p, "column", name, v])
    _write_csv(out / IMPORTANCE_CSV, cfg, ["pattern", "level", "name", "importance"], rows)
    hist = report["label_histogram"]
    _write_csv(out / HISTOGRAM_CSV, cfg,
               ["pattern", "label_0", "label_1", "label_2", "published_0", "published_1", "published_2"],
               [[p, *hist["counts"][p], *hist["published_reference"][p]] for p in dio.PATTERNS])
    rows = [[r["seed"], p, r["accuracy"][p], *r["best_cells"][p]]
            for r in report["multi_seed"]["runs"] for p in dio.PATTERNS]
    _write_csv(out / MULTI_SEED_CSV, cfg, ["seed", "pattern", "weighted_accuracy", "learning_rate", "n_estimators"],
               rows)


def cmd_run_all(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    _check_overwrite(out, list(STAGE_OUTPUTS), cfg.force)
    staged = cfg.with_overrides(force=True)
    cmd_clean(staged)
    cmd_cluster(staged)
    cmd_train(staged)
    return cmd_evaluate(staged)


COMMANDS = {
    "clean": cmd_clean,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "run-all": cmd_run_all,
}


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="darkbanner", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat 'key = value' config file; flags override it")
        p.add_argument("--input", dest="input_csv", help="annotated corpus CSV")
        p.add_argument("--out", dest="output_dir", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--seeds", dest="seeds_count", type=int, help="number of seeds in the multi-seed summary")
        p.add_argument("--k", dest="k_clusters", type=int, help="number of phrase clusters")
        p.add_argument("--train-fraction", dest="train_fraction", help="e.g. 2/3")
        p.add_argument("--grid-rates", dest="grid_rates", help="comma-separated learning rates")
        p.add_argument("--grid-estimators", dest="grid_estimators", help="comma-separated stage counts")
        p.add_argument("--lexicon", help="term<TAB>valence sentiment lexicon")
        p.add_argument("--columns", dest="column_map", help="JSON column-mapping file")
        p.add_argument("--provider", choices=["offline-default", "external"])
        p.add_argument("--force", action="store_true", default=None, help="overwrite existing outputs")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.config, **overrides)
        with output_lock(Path(cfg.output_dir)):
            COMMANDS[args.command](cfg)
    except DarkBannerError as exc:
        print(f"darkbanner: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"darkbanner: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"darkbanner: invalid configuration: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
