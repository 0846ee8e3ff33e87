"""Multiclass gradient-boosted trees with multinomial deviance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import DimensionMismatch, EmptyData, InvalidHyperparameter, ShapeMismatch
from . import _kernel
from .cart import REGRESSION, DecisionTree, _check_X, grow_raw

DENOM_FLOOR = 1e-12


@dataclass
class GbtModel:
    classes: np.ndarray
    initial_scores: np.ndarray
    learning_rate: float
    n_estimators: int
    max_depth: int = 3
    min_samples_leaf: int = 1
    # stages[s][k] is the regression tree for class k at stage s
    stages: list[list[DecisionTree]] = field(default_factory=list)
    n_features: int = 0
    degenerate: bool = False
    provenance: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def decision_function(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        scores = np.tile(self.initial_scores, (X.shape[0], 1))
        for stage in self.stages:
            for k, tree in enumerate(stage):
                scores[:, k] += self.learning_rate * tree.predict_value(X)[:, 0]
        return scores

    def staged_decision_function(self, X) -> Iterator[np.ndarray]:
        """Scores after 0, 1, ..., n_estimators stages (copies)."""
        X = _check_X(X, self.n_features)
        scores = np.tile(self.initial_scores, (X.shape[0], 1))
        yield scores.copy()
        for stage in self.stages:
            for k, tree in enumerate(stage):
                scores[:, k] += self.learning_rate * tree.predict_value(X)[:, 0]
            yield scores.copy()

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def deviance(y_codes: np.ndarray, scores: np.ndarray) -> float:
    """Mean multinomial deviance (log loss) of integer class codes under ``scores``."""
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-np.mean(logp[np.arange(len(y_codes)), y_codes]))


def prior_only_model(y, n_features: int) -> GbtModel:
    """Stage-free model predicting the training class priors everywhere."""
    classes, counts = np.unique(np.asarray(y), return_counts=True)
    return GbtModel(
        classes=classes,
        initial_scores=np.log(counts / counts.sum()),
        learning_rate=1.0,
        n_estimators=0,
        n_features=n_features,
        degenerate=len(classes) < 2,
    )


def fit_gbt(X, y, learning_rate: float = 0.01, n_estimators: int = 30, max_depth: int = 3,
            min_samples_leaf: int = 1) -> GbtModel:
    """Stage-wise boosting of one regression tree per class on the softmax gradient.

    Scores start at the log class priors. At every stage, for every class,
    a CART regression tree is fitted to ``onehot - p``; each leaf then takes
    the Newton step ``(K-1)/K * sum(r) / sum(|r|(1-|r|))`` and scores move by
    ``learning_rate`` times the leaf value.

    Only classes present in ``y`` are modelled. A single-class ``y`` gives a
    degenerate prior-only model.
    """
    if not learning_rate > 0:
        raise InvalidHyperparameter(f"learning_rate must be > 0, got {learning_rate}")
    if n_estimators < 0 or int(n_estimators) != n_estimators:
        raise InvalidHyperparameter(f"n_estimators must be a non-negative integer, got {n_estimators}")
    X = _check_X(X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise EmptyData("cannot boost on zero rows")
    if y.shape != (X.shape[0],):
        raise ShapeMismatch(f"{X.shape[0]} rows but targets of shape {y.shape}")

    base = prior_only_model(y, X.shape[1])
    model = GbtModel(
        classes=base.classes,
        initial_scores=base.initial_scores,
        learning_rate=float(learning_rate),
        n_estimators=int(n_estimators),
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        n_features=X.shape[1],
        degenerate=base.degenerate,
    )
    if model.degenerate:
        model.n_estimators = 0
        return model

    K = model.n_classes
    codes = np.searchsorted(model.classes, y)
    onehot = np.eye(K)[codes]
    scores = np.tile(model.initial_scores, (X.shape[0], 1))
    order = _kernel.presort(X)
    y_dummy = np.zeros(X.shape[0], np.int64)
    factor = (K - 1) / K
    for _ in range(model.n_estimators):
        p = softmax(scores)
        stage = []
        for k in range(K):
            r = onehot[:, k] - p[:, k]
            out = grow_raw(X, y_dummy, r, 1, True, max_depth, min_samples_leaf, order=order)
            feature, threshold, left, right, depth, n_node, impurity, _, leaf_of = out
            num = np.bincount(leaf_of, weights=r, minlength=len(feature))
            den = np.bincount(leaf_of, weights=np.abs(r) * (1.0 - np.abs(r)), minlength=len(feature))
            value = factor * num / np.maximum(den, DENOM_FLOOR)
            value[feature >= 0] = 0.0
            tree = DecisionTree(feature, threshold, left, right, value[:, None], n_node, impurity, depth,
                                REGRESSION, max_depth, min_samples_leaf, None, X.shape[1])
            scores[:, k] += model.learning_rate * value[leaf_of]
            stage.append(tree)
        model.stages.append(stage)
    return model


def predict_gbt(model: GbtModel, x) -> tuple[np.ndarray, object]:
    """Class distribution and predicted label for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise DimensionMismatch(f"expected a vector of {model.n_features} features, got shape {x.shape}")
    dist = model.predict_proba(x[None, :])[0]
    return dist, model.classes[int(np.argmax(dist))]
