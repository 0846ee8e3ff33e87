"""Feature assembly, per-pattern training and evaluation."""

from __future__ import annotations

import hashlib
import json
import statistics
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .dataset_io import (
    NO,
    PATTERNS,
    YES,
    BannerRecord,
    LabelSet,
    SplitIndices,
    label_histogram,
    split_train_test,
    split_value_comment,
)
from .errors import EmptyInput, SplitMismatch
from .text_prep import SentimentResult, TextService, stemmed
from .tree_learn import (
    GbtModel,
    HyperGrid,
    feature_importances,
    fit_gbt,
    fit_random_forest,
    grid_search,
    prior_only_model,
)

REPORT_FORMAT_VERSION = 1

# reference values reported for the 300-site corpus
PUBLISHED_LABEL_HISTOGRAM = {
    "nagging": [229, 68, 3],
    "obstruction": [50, 121, 129],
    "sneaking": [186, 114, 0],
    "interface_interference": [55, 109, 136],
    "forced_action": [181, 88, 31],
}
PUBLISHED_ACCURACY = {
    "nagging": 0.720,
    "obstruction": 0.500,
    "sneaking": 0.686,
    "interface_interference": 0.570,
    "forced_action": 0.628,
}
PUBLISHED_BEST_CELL = (0.01, 30)

UNKNOWN = "unknown"
WIDGET_TYPES = ("button", "link", "box", "drop-down")
VISIBILITY = ("immediate", "scroll")
N_LABEL_CLASSES = 3

FEATURES = (
    "notyesclusters",
    "equalwidgetlevel",
    "widgettypelevel",
    "location",
    "contentblocking",
    "optionswordscounted",
    "clickstorejectall",
    "notyesvisibility",
    "clarityofoptions",
    "iscookieusedlisted",
)
CATEGORICAL = ("notyesclusters", "widgettypelevel", "location", "notyesvisibility")
BINARY = ("equalwidgetlevel", "contentblocking")


@dataclass(frozen=True)
class FeatureVector:
    notyesclusters: str = UNKNOWN
    equalwidgetlevel: int | None = None
    widgettypelevel: str = UNKNOWN
    location: str = UNKNOWN
    contentblocking: int | None = None
    optionswordscounted: int | None = None
    clickstorejectall: int | None = None
    notyesvisibility: str = UNKNOWN
    clarityofoptions: float = 0.0
    iscookieusedlisted: float = 0.0

    def __post_init__(self):
        for name in ("clarityofoptions", "iscookieusedlisted"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1]")
        for name in ("optionswordscounted", "clickstorejectall"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")


# -- record -> features -------------------------------------------------------

_WIDGET_STEMS = {"button": "button", "link": "link", "box": "box", "checkbox": "box", "dropdown": "drop-down",
                 "drop": "drop-down", "select": "drop-down", "menu": "drop-down"}


def widget_parity(widget_level: str) -> int | None:
    """1 when the value part reads as yes, 0 for no, None when unclear."""
    value, _ = split_value_comment(widget_level)
    stems = stemmed(value)
    if not stems:
        return None
    if stems[0] in _yes_stems():
        return 1
    if stems[0] in _no_stems():
        return 0
    return None


def _yes_stems():
    return {stemmed(YES)[0], "y", "ja"}


def _no_stems():
    return {stemmed(NO)[0], "n", "nej", "nei"}


def widget_type(widget_level: str) -> str:
    """First widget word in the comment part, else anywhere in the text."""
    value, comment = split_value_comment(widget_level)
    for text in (comment, widget_level):
        for stem in stemmed(text):
            if stem in _WIDGET_STEMS:
                return _WIDGET_STEMS[stem]
    return UNKNOWN


def location_category(location: str) -> str:
    value, _ = split_value_comment(location)
    value = value.strip().lower()
    if not any(ch.isalpha() for ch in value):
        return UNKNOWN
    return value


def visibility_category(text: str) -> str:
    stems = set(stemmed(text))
    for cat in VISIBILITY:
        if stemmed(cat)[0] in stems:
            return cat
    return UNKNOWN


def _binary(tristate: str) -> int | None:
    return {YES: 1, NO: 0}.get(tristate)


def build_feature_vector(record: BannerRecord, cluster_id: int | None,
                         sentiments: tuple[SentimentResult, SentimentResult]) -> FeatureVector:
    """Map a cleaned record to the ten model features.

    ``sentiments`` are for the clarity comment and the cookie-listing comment,
    in that order.
    """
    clarity, listing = sentiments
    return FeatureVector(
        notyesclusters=UNKNOWN if cluster_id is None else str(int(cluster_id)),
        equalwidgetlevel=widget_parity(record.widget_level_raw),
        widgettypelevel=widget_type(record.widget_level_raw),
        location=location_category(record.location_raw),
        contentblocking=_binary(record.content_blocking),
        optionswordscounted=record.options_words_count,
        clickstorejectall=record.clicks_to_reject_all,
        notyesvisibility=visibility_category(record.not_yes_visibility_raw),
        clarityofoptions=clarity.score,
        iscookieusedlisted=listing.score,
    )


def build_feature_vectors(records: Sequence[BannerRecord], cluster_ids: Mapping[str, int | None],
                          service: TextService | None = None) -> list[FeatureVector]:
    service = service or TextService()
    out = []
    for r in records:
        sent = (
            service.sentiment(service.translate(r.clarity_comment)),
            service.sentiment(service.translate(r.cookie_listing_comment)),
        )
        out.append(build_feature_vector(r, cluster_ids.get(r.site_id), sent))
    return out


# -- encoding -----------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    source: str
    kind: str  # "onehot", "binary" or "numeric"
    category: str | None = None


@dataclass
class Encoder:
    """Learned encoding: one-hot vocabularies and median imputation values."""

    vocabularies: dict[str, list[str]]
    imputation_values: dict[str, float]
    columns: list[ColumnSpec] = field(default_factory=list)

    def __post_init__(self):
        if not self.columns:
            self.columns = _columns(self.vocabularies)

    def transform(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        rows = np.zeros((len(vectors), len(self.columns)))
        for i, v in enumerate(vectors):
            for j, col in enumerate(self.columns):
                raw = getattr(v, col.source)
                if col.kind == "onehot":
                    vocab = self.vocabularies[col.source]
                    value = raw if raw in vocab else UNKNOWN
                    rows[i, j] = 1.0 if value == col.category else 0.0
                elif raw is None:
                    rows[i, j] = self.imputation_values[col.name]
                else:
                    rows[i, j] = float(raw)
        return rows

    def as_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "vocabularies": self.vocabularies,
            "imputation_values": self.imputation_values,
            "columns": [asdict(c) for c in self.columns],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Encoder":
        return cls(
            vocabularies={k: list(v) for k, v in data["vocabularies"].items()},
            imputation_values={k: float(v) for k, v in data["imputation_values"].items()},
            columns=[ColumnSpec(**c) for c in data["columns"]],
        )


def _columns(vocabularies: Mapping[str, list[str]]) -> list[ColumnSpec]:
    cols = []
    for name in FEATURES:
        if name in CATEGORICAL:
            cols.extend(ColumnSpec(f"{name}={cat}", name, "onehot", cat) for cat in vocabularies[name])
        elif name in BINARY:
            cols.append(ColumnSpec(name, name, "binary"))
        else:
            cols.append(ColumnSpec(name, name, "numeric"))
    return cols


def fit_encoder(vectors: Sequence[FeatureVector], fit_rows: Sequence[int], n_clusters: int = 6) -> Encoder:
    """Vocabularies and medians learned from ``fit_rows`` only.

    Widget type, visibility and cluster id have declared vocabularies;
    location takes the categories seen in the fitting rows. Every group ends
    with an ``unknown`` category that absorbs unseen values.
    """
    if len(fit_rows) == 0:
        raise EmptyInput("encoder needs at least one fitting row")
    fit = [vectors[i] for i in fit_rows]
    seen_locations = sorted({v.location for v in fit} - {UNKNOWN})
    vocabularies = {
        "notyesclusters": [str(c) for c in range(n_clusters)] + [UNKNOWN],
        "widgettypelevel": list(WIDGET_TYPES) + [UNKNOWN],
        "location": seen_locations + [UNKNOWN],
        "notyesvisibility": list(VISIBILITY) + [UNKNOWN],
    }
    imputation = {}
    for name in FEATURES:
        if name in CATEGORICAL:
            continue
        present = [getattr(v, name) for v in fit if getattr(v, name) is not None]
        imputation[name] = float(np.median(present)) if present else 0.0
    return Encoder(vocabularies, imputation)


@dataclass
class EncodedMatrix:
    rows: np.ndarray
    column_spec: list[ColumnSpec]
    imputation_values: dict[str, float]
    encoder: Encoder

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.column_spec]


def encode_features(vectors: Sequence[FeatureVector], fit_rows: Sequence[int], n_clusters: int = 6) -> EncodedMatrix:
    enc = fit_encoder(vectors, fit_rows, n_clusters)
    return EncodedMatrix(enc.transform(vectors), enc.columns, dict(enc.imputation_values), enc)


# -- metrics ------------------------------------------------------------------


def weighted_accuracy(actual, predicted) -> float:
    """Per-class recall weighted by class frequency in ``actual``."""
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if len(actual) == 0:
        raise EmptyInput("weighted accuracy of an empty label vector")
    if actual.shape != predicted.shape:
        raise ValueError("actual and predicted differ in length")
    n = len(actual)
    total = Fraction(0)
    for c in np.unique(actual):
        mask = actual == c
        n_c = int(mask.sum())
        correct_c = int(np.sum(predicted[mask] == c))
        total += Fraction(n_c, n) * Fraction(correct_c, n_c)
    return float(total)


@dataclass
class Confusion:
    matrix: np.ndarray
    counts: np.ndarray
    empty_rows: list[int]

    def as_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "counts": self.counts.tolist(),
            "empty_rows": self.empty_rows,
        }


def confusion_matrix(actual, predicted, n_classes: int = N_LABEL_CLASSES) -> Confusion:
    """Row-normalised confusion matrix; rows are actual labels."""
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for a, p in zip(actual, predicted):
        counts[int(a), int(p)] += 1
    totals = counts.sum(axis=1)
    matrix = np.zeros((n_classes, n_classes))
    empty = []
    for i in range(n_classes):
        if totals[i]:
            matrix[i] = counts[i] / totals[i]
        else:
            empty.append(i)
    return Confusion(matrix, counts, empty)


def majority_class(y) -> int:
    values, counts = np.unique(np.asarray(y), return_counts=True)
    return int(values[np.argmax(counts)])


# -- training -----------------------------------------------------------------


def split_hash(split: SplitIndices) -> str:
    payload = json.dumps([list(split.train_ids), list(split.test_ids)]).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def pattern_targets(labels: Sequence[LabelSet], pattern: str) -> np.ndarray:
    return np.array([ls[pattern] for ls in labels], dtype=np.int64)


@dataclass
class TrainedPattern:
    pattern: str
    model: GbtModel
    grid: dict | None
    degenerate: bool


def train_pattern(X_train: np.ndarray, y_train: np.ndarray, grid: HyperGrid, seed: int) -> tuple[GbtModel, dict | None]:
    if len(np.unique(y_train)) < 2:
        return prior_only_model(y_train, X_train.shape[1]), None
    result = grid_search(X_train, y_train, grid, seed)
    rate, n_est = result.best
    model = fit_gbt(X_train, y_train, learning_rate=rate, n_estimators=n_est, max_depth=grid.max_depth)
    return model, result.as_dict()


def train_all(matrix: EncodedMatrix, labels: Sequence[LabelSet], split: SplitIndices,
              grid: HyperGrid = HyperGrid(), seed: int = 42,
              patterns: Sequence[str] = PATTERNS) -> dict[str, TrainedPattern]:
    """Grid-search then refit one boosted model per pattern on the training rows."""
    if len(labels) != len(matrix.rows):
        raise ValueError("matrix and labels are not aligned")
    train = np.array(split.train_ids)
    X_train = matrix.rows[train]
    out = {}
    for pattern in patterns:
        y_train = pattern_targets(labels, pattern)[train]
        model, grid_info = train_pattern(X_train, y_train, grid, seed)
        model.provenance = {
            "pattern": pattern,
            "seed": split.seed,
            "split_hash": split_hash(split),
            "n_train": len(train),
            "columns": matrix.column_names,
        }
        out[pattern] = TrainedPattern(pattern, model, grid_info, model.degenerate)
    return out


# -- evaluation ---------------------------------------------------------------


def pattern_importances(matrix: EncodedMatrix, labels: Sequence[LabelSet], split: SplitIndices,
                        seed: int, n_trees: int = 100) -> dict[str, dict]:
    """Random-forest impurity importances per pattern, per column and per source feature."""
    train = np.array(split.train_ids)
    X = matrix.rows[train]
    out = {}
    for pattern in PATTERNS:
        y = pattern_targets(labels, pattern)[train]
        forest = fit_random_forest(X, y, n_trees=n_trees, seed=seed)
        imp = feature_importances(forest)
        by_feature = {name: 0.0 for name in FEATURES}
        for col, v in zip(matrix.column_spec, imp):
            by_feature[col.source] += float(v)
        out[pattern] = {
            "columns": {c.name: float(v) for c, v in zip(matrix.column_spec, imp)},
            "features": by_feature,
        }
    return out


def evaluate(models: Mapping[str, GbtModel], matrix: EncodedMatrix, labels: Sequence[LabelSet],
             split: SplitIndices) -> dict:
    """Per-pattern test metrics for models trained on ``split``."""
    expected = split_hash(split)
    train = np.array(split.train_ids)
    test = np.array(split.test_ids)
    X_test = matrix.rows[test]
    out = {}
    for pattern in PATTERNS:
        model = models[pattern]
        got = model.provenance.get("split_hash")
        if got != expected:
            raise SplitMismatch(f"model for {pattern} was trained on split {got}, evaluating on {expected}")
        y = pattern_targets(labels, pattern)
        y_test = y[test]
        pred = model.predict(X_test)
        majority = majority_class(y[train])
        cm = confusion_matrix(y_test, pred)
        out[pattern] = {
            "weighted_accuracy": weighted_accuracy(y_test, pred),
            "majority_class": majority,
            "majority_baseline_accuracy": weighted_accuracy(y_test, np.full(len(y_test), majority)),
            "confusion_matrix": cm.as_dict(),
            "test_class_counts": np.bincount(y_test, minlength=N_LABEL_CLASSES).tolist(),
            "train_class_counts": np.bincount(y[train], minlength=N_LABEL_CLASSES).tolist(),
            "classes_modelled": [int(c) for c in model.classes],
            "degenerate": bool(model.degenerate),
            "learning_rate": model.learning_rate,
            "n_estimators": model.n_estimators,
            "published_reference_accuracy": PUBLISHED_ACCURACY[pattern],
        }
    return out


def run_seed(vectors: Sequence[FeatureVector], labels: Sequence[LabelSet], seed: int,
             train_fraction=Fraction(2, 3), grid: HyperGrid = HyperGrid(), n_clusters: int = 6) -> dict:
    """Split, encode, train and evaluate once; returns per-pattern accuracy and split."""
    split = split_train_test(len(vectors), train_fraction, seed)
    matrix = encode_features(vectors, split.train_ids, n_clusters)
    trained = train_all(matrix, labels, split, grid, seed)
    results = evaluate({p: t.model for p, t in trained.items()}, matrix, labels, split)
    return {
        "seed": seed,
        "split_hash": split_hash(split),
        "accuracy": {p: results[p]["weighted_accuracy"] for p in PATTERNS},
        "best_cells": {p: [trained[p].model.learning_rate, trained[p].model.n_estimators] for p in PATTERNS},
    }


def multi_seed_summary(vectors: Sequence[FeatureVector], labels: Sequence[LabelSet], seeds: Sequence[int],
                       train_fraction=Fraction(2, 3), grid: HyperGrid = HyperGrid(), n_clusters: int = 6) -> dict:
    runs = [run_seed(vectors, labels, s, train_fraction, grid, n_clusters) for s in seeds]
    summary = {}
    for p in PATTERNS:
        accs = [r["accuracy"][p] for r in runs]
        summary[p] = {
            "mean": statistics.fmean(accs),
            "std": statistics.stdev(accs) if len(accs) > 1 else 0.0,
            "min": min(accs),
            "max": max(accs),
            "published_reference": PUBLISHED_ACCURACY[p],
        }
    return {"seeds": list(seeds), "runs": runs, "summary": summary}


def histogram_report(labels: Sequence[LabelSet]) -> dict:
    hist = label_histogram(labels)
    return {
        "counts": hist,
        "published_reference": PUBLISHED_LABEL_HISTOGRAM,
        "matches_published": hist == PUBLISHED_LABEL_HISTOGRAM,
    }
