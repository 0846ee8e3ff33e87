"""CART decision trees (Gini classification and squared-error regression)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, EmptyData, ShapeMismatch
from . import _kernel

CLASSIFICATION = "classification-gini"
REGRESSION = "regression-mse"


@dataclass
class DecisionTree:
    """A fitted tree stored as flat node arrays.

    ``value`` holds, per node, the class distribution (classification) or a
    single real (regression). Leaves are the nodes with ``feature == -1``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    impurity: np.ndarray
    depth: np.ndarray
    mode: str
    max_depth: int | None
    min_samples_leaf: int
    classes: np.ndarray | None = None
    n_features: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def apply(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return _kernel.apply(X, self.feature, self.threshold, self.left, self.right)

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_proba(self, X) -> np.ndarray:
        if self.mode != CLASSIFICATION:
            raise TypeError("predict_proba needs a classification tree")
        return self.predict_value(X)

    def predict(self, X) -> np.ndarray:
        out = self.predict_value(X)
        if self.mode == CLASSIFICATION:
            # argmax takes the first maximum: lowest class index wins ties
            return self.classes[np.argmax(out, axis=1)]
        return out[:, 0]

    def get_depth(self) -> int:
        return int(self.depth.max()) if self.n_nodes else 0


def _check_X(X, n_features=None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ShapeMismatch(f"feature matrix must be 2-D, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got {X.shape[1]}")
    return X


def grow_raw(X, y_cls, y_reg, n_classes, regression, max_depth, min_samples_leaf, priorities=None, n_sub=None,
             order=None):
    """Thin wrapper over the compiled grower; returns its raw arrays.

    ``order`` is the per-feature argsort of ``X`` (see ``_kernel.presort``);
    callers fitting many trees on one matrix pass it to avoid re-sorting.
    """
    n, d = X.shape
    if order is None:
        order = _kernel.presort(X)
    if priorities is None:
        priorities = np.zeros((0, d))
    if n_sub is None:
        n_sub = d
    return _kernel.grow(
        X,
        order,
        y_cls,
        y_reg,
        n_classes,
        regression,
        -1 if max_depth is None else int(max_depth),
        int(min_samples_leaf),
        priorities,
        int(n_sub),
    )


def fit_tree(X, y, max_depth: int | None = None, min_samples_leaf: int = 1, mode: str = CLASSIFICATION,
             priorities=None, n_sub=None) -> DecisionTree:
    """Greedy CART.

    Splits maximise impurity decrease over all midpoints between consecutive
    distinct feature values; growth stops at ``max_depth``, at pure nodes, or
    when no split leaves ``min_samples_leaf`` samples on both sides.
    """
    X = _check_X(X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise EmptyData("cannot fit a tree on zero rows")
    if y.shape != (X.shape[0],):
        raise ShapeMismatch(f"{X.shape[0]} rows but targets of shape {y.shape}")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be >= 1")

    if mode == CLASSIFICATION:
        classes, y_cls = np.unique(y, return_inverse=True)
        y_cls = y_cls.astype(np.int64)
        y_reg = np.zeros(len(y))
        k = len(classes)
        out = grow_raw(X, y_cls, y_reg, k, False, max_depth, min_samples_leaf, priorities, n_sub)
        stats = out[7]
        value = stats / out[5][:, None]
    elif mode == REGRESSION:
        classes = None
        y_reg = y.astype(np.float64)
        y_cls = np.zeros(len(y), np.int64)
        out = grow_raw(X, y_cls, y_reg, 1, True, max_depth, min_samples_leaf, priorities, n_sub)
        value = out[7] / out[5][:, None]
    else:
        raise ValueError(f"unknown tree mode {mode!r}")

    feature, threshold, left, right, depth, n_node, impurity = out[:7]
    return DecisionTree(
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        value=value,
        n_node_samples=n_node,
        impurity=impurity,
        depth=depth,
        mode=mode,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        classes=classes,
        n_features=X.shape[1],
    )


def impurity_decrease(tree: DecisionTree) -> np.ndarray:
    """Per-feature total weighted impurity decrease of one tree (unnormalised)."""
    imp = np.zeros(tree.n_features)
    root_n = tree.n_node_samples[0]
    for node in np.flatnonzero(~tree.is_leaf):
        l, r = tree.left[node], tree.right[node]
        dec = (
            tree.n_node_samples[node] * tree.impurity[node]
            - tree.n_node_samples[l] * tree.impurity[l]
            - tree.n_node_samples[r] * tree.impurity[r]
        )
        imp[tree.feature[node]] += max(dec, 0.0) / root_n
    return imp
