"""Grid search over boosting learning rate and stage count with stratified CV."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import InvalidHyperparameter, TooFewSamples
from .boosting import fit_gbt, prior_only_model, softmax
from .cart import _check_X

PUBLISHED_LEARNING_RATES = (0.15, 0.1, 0.05, 0.01, 0.005, 0.001)
PUBLISHED_N_ESTIMATORS = (10, 15, 20, 25, 30, 35, 40)


@dataclass(frozen=True)
class HyperGrid:
    learning_rates: tuple[float, ...] = PUBLISHED_LEARNING_RATES
    n_estimators_options: tuple[int, ...] = PUBLISHED_N_ESTIMATORS
    cv_folds: int = 3
    max_depth: int = 3

    def __post_init__(self):
        if not self.learning_rates or not self.n_estimators_options:
            raise InvalidHyperparameter("grid lists must be non-empty")
        if any(not r > 0 for r in self.learning_rates):
            raise InvalidHyperparameter("learning rates must be > 0")
        if any(int(n) != n or n < 1 for n in self.n_estimators_options):
            raise InvalidHyperparameter("estimator counts must be integers >= 1")
        if self.cv_folds < 2:
            raise InvalidHyperparameter("cv_folds must be >= 2")

    @property
    def cells(self) -> list[tuple[float, int]]:
        return [(r, n) for r in self.learning_rates for n in self.n_estimators_options]

    def as_dict(self) -> dict:
        return {
            "learning_rates": list(self.learning_rates),
            "n_estimators_options": list(self.n_estimators_options),
            "cv_folds": self.cv_folds,
            "max_depth": self.max_depth,
        }


@dataclass
class GridResult:
    best: tuple[float, int]
    cell_scores: dict[tuple[float, int], float]
    small_classes: list = field(default_factory=list)
    folds: list[list[int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "best_learning_rate": self.best[0],
            "best_n_estimators": self.best[1],
            "cells": [
                {"learning_rate": r, "n_estimators": n, "mean_cv_accuracy": s}
                for (r, n), s in sorted(self.cell_scores.items())
            ],
            "small_classes": [int(c) for c in self.small_classes],
        }


def stratified_folds(y, n_folds: int, seed: int) -> tuple[list[np.ndarray], list]:
    """Assign rows to folds class by class, round-robin, after a seeded shuffle.

    The round-robin position carries over between classes, so classes with
    fewer members than folds still spread across distinct folds. Returns the
    per-fold row indices and the classes that had fewer than ``n_folds`` rows.
    """
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    rng = np.random.default_rng([seed, n_folds])
    fold_of = np.empty(len(y), dtype=np.int64)
    pos = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(y == c))
        for i in members:
            fold_of[i] = pos % n_folds
            pos += 1
    folds = [np.flatnonzero(fold_of == f) for f in range(n_folds)]
    small = [c for c, n in zip(classes, counts) if n < n_folds]
    return folds, small


def grid_search(X, y, grid: HyperGrid = HyperGrid(), seed: int = 42) -> GridResult:
    """Mean stratified-CV accuracy for every (learning rate, stage count) cell.

    For each rate and fold one model with the largest stage count is fitted
    and scored after every candidate stage count; boosting is sequential, so
    the prefix of a longer run is exactly the shorter model. Ties go to the
    lower learning rate, then the lower stage count.
    """
    X = _check_X(X)
    y = np.asarray(y)
    if len(X) < grid.cv_folds:
        raise TooFewSamples(f"{len(X)} rows cannot fill {grid.cv_folds} folds")
    folds, small = stratified_folds(y, grid.cv_folds, seed)
    wanted = sorted(set(int(n) for n in grid.n_estimators_options))
    top = wanted[-1]

    totals: dict[tuple[float, int], Fraction] = {cell: Fraction(0) for cell in grid.cells}
    for k, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        if len(test_idx) == 0:
            raise TooFewSamples(f"fold {k} is empty")
        y_test = y[test_idx]
        for rate in grid.learning_rates:
            if len(np.unique(y[train_idx])) < 2:
                model = prior_only_model(y[train_idx], X.shape[1])
                acc = Fraction(int(np.sum(model.predict(X[test_idx]) == y_test)), len(test_idx))
                for n in grid.n_estimators_options:
                    totals[(rate, n)] += acc
                continue
            model = fit_gbt(X[train_idx], y[train_idx], learning_rate=rate, n_estimators=top,
                            max_depth=grid.max_depth)
            for n_stages, scores in enumerate(model.staged_decision_function(X[test_idx])):
                if n_stages not in wanted:
                    continue
                pred = model.classes[np.argmax(softmax(scores), axis=1)]
                acc = Fraction(int(np.sum(pred == y_test)), len(test_idx))
                totals[(rate, n_stages)] += acc

    means = {cell: total / len(folds) for cell, total in totals.items()}
    best = min(means, key=lambda cell: (-means[cell], cell[0], cell[1]))
    return GridResult(
        best=best,
        cell_scores={cell: float(v) for cell, v in means.items()},
        small_classes=small,
        folds=[f.tolist() for f in folds],
    )
