"""Random forests and mean-decrease-in-impurity feature importances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import UnfittedModel
from .cart import CLASSIFICATION, DecisionTree, _check_X, fit_tree, impurity_decrease


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    classes: np.ndarray
    n_trees: int
    seed: int
    feature_subsample: float
    bootstrap: bool = True
    # per tree: row indices drawn for it (all rows when bootstrap is off)
    samples: list[np.ndarray] = field(default_factory=list, repr=False)

    def votes(self, X) -> np.ndarray:
        X = _check_X(X, self.trees[0].n_features if self.trees else None)
        counts = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        for tree in self.trees:
            pred = tree.predict(X)
            counts[np.arange(len(X)), np.searchsorted(self.classes, pred)] += 1
        return counts

    def predict(self, X) -> np.ndarray:
        if not self.trees:
            raise UnfittedModel("forest has no trees")
        return self.classes[np.argmax(self.votes(X), axis=1)]

    def oob_accuracy(self, X, y) -> float:
        """Accuracy of out-of-bag majority votes over rows that were left out at least once."""
        X = _check_X(X)
        y = np.asarray(y)
        counts = np.zeros((len(X), len(self.classes)), dtype=np.int64)
        for tree, rows in zip(self.trees, self.samples):
            oob = np.ones(len(X), dtype=bool)
            oob[rows] = False
            if not oob.any():
                continue
            pred = tree.predict(X[oob])
            counts[np.flatnonzero(oob), np.searchsorted(self.classes, pred)] += 1
        voted = counts.sum(axis=1) > 0
        if not voted.any():
            return float("nan")
        pred = self.classes[np.argmax(counts[voted], axis=1)]
        return float(np.mean(pred == y[voted]))


def fit_random_forest(X, y, n_trees: int = 100, seed: int = 42, max_features: str | float | None = "sqrt",
                      bootstrap: bool = True, max_depth: int | None = None,
                      min_samples_leaf: int = 1) -> RandomForest:
    """Bagged CART classifiers with per-split random feature subsets.

    Tree ``i`` draws its bootstrap rows and split-feature priorities from a
    generator seeded with ``(seed, i)``.
    """
    X = _check_X(X)
    y = np.asarray(y)
    n, d = X.shape
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if max_features == "sqrt":
        n_sub = max(1, int(math.isqrt(d)))
    elif max_features is None:
        n_sub = d
    else:
        n_sub = max(1, min(d, int(round(float(max_features) * d))))
    classes = np.unique(y)

    trees, samples = [], []
    for i in range(n_trees):
        rng = np.random.default_rng([seed, i])
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        priorities = rng.random((2 * n + 1, d)) if n_sub < d else None
        tree = fit_tree(X[rows], y[rows], max_depth=max_depth, min_samples_leaf=min_samples_leaf,
                        mode=CLASSIFICATION, priorities=priorities, n_sub=n_sub)
        trees.append(tree)
        samples.append(np.sort(rows))
    return RandomForest(trees, classes, n_trees, seed, n_sub / d, bootstrap, samples)


def tree_importances(tree: DecisionTree) -> np.ndarray:
    imp = impurity_decrease(tree)
    total = imp.sum()
    return imp / total if total > 0 else imp


def feature_importances(forest: RandomForest) -> np.ndarray:
    """Mean decrease in impurity, averaged over trees and normalised to sum to 1.

    All zeros when no tree ever split.
    """
    if forest is None or not forest.trees:
        raise UnfittedModel("feature importances need a fitted forest")
    imp = np.mean([tree_importances(t) for t in forest.trees], axis=0)
    total = imp.sum()
    if total <= 0:
        return np.zeros_like(imp)
    return imp / total
