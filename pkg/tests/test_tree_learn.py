import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkbanner.errors import (
    DimensionMismatch,
    EmptyData,
    InvalidHyperparameter,
    ShapeMismatch,
    TooFewSamples,
    UnfittedModel,
)
from darkbanner.tree_learn import (
    REGRESSION,
    HyperGrid,
    deviance,
    feature_importances,
    fit_gbt,
    fit_random_forest,
    fit_tree,
    grid_search,
    load_model,
    model_to_dict,
    predict_gbt,
    prior_only_model,
    save_model,
    stratified_folds,
)
from darkbanner.tree_learn.forest import tree_importances
from oracles import exhaustive_cart, oracle_predict, straight_line_gbt_proba

# margin-separated on feature 0, generated once and frozen
SEPARABLE_X = [
    [0.25, 0.79], [0.55, -0.55], [-0.4, 0.75], [-0.99, 0.64], [0.59, -0.06], [-0.39, -0.44], [-0.49, -0.11],
    [0.99, 0.59], [0.24, 0.98], [-0.57, -0.68], [0.23, -0.91], [-0.93, 0.03], [0.26, 0.03], [-0.98, -0.62],
    [0.38, -0.6], [-0.26, -0.99], [0.66, -0.69], [-0.46, 0.76], [0.28, 0.48], [-0.82, 0.08], [-0.28, 0.2],
    [-0.88, -0.22], [-0.35, -0.7], [0.63, -0.24], [0.96, 0.18], [0.21, 0.28], [0.35, -0.7], [0.94, -0.57],
    [0.34, -0.4], [0.75, 0.32], [-0.74, 0.69], [0.89, 0.81], [-0.62, 0.86], [0.77, 0.28], [-0.92, 0.75],
    [-0.36, 0.5], [-0.95, -0.26], [-0.94, -0.75], [0.93, 0.32], [0.75, -0.31],
]
SEPARABLE_Y = [int(x0 > 0) for x0, _ in SEPARABLE_X]

LINE_X = [
    0.06, 0.26, 0.3, 0.39, 0.4, 0.59, 0.62, 0.63, 0.66, 0.74, 0.78, 0.84, 0.84, 0.85, 1.13, 1.14, 1.23, 1.31,
    1.46, 1.52, 1.65, 1.7, 1.7, 1.84, 1.86, 2.11, 2.25, 2.41, 2.75, 2.9,
]
LINE_Y = [int(math.floor(v)) for v in LINE_X]


def small_instance(rng, n_max=8, d_max=2, levels=4):
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    # few distinct values per feature, so ties between splits are common
    X = rng.integers(0, levels, size=(n, d)).astype(float)
    y = rng.integers(0, 3, size=n)
    return X, y


def check_cart_against_oracle(rng) -> None:
    X, y = small_instance(rng)
    tree = fit_tree(X, y)
    oracle = exhaustive_cart(X.tolist(), y.tolist())
    queries = np.vstack([X, rng.uniform(-1, 4, size=(20, X.shape[1]))])
    got = tree.predict(queries)
    want = [oracle_predict(oracle, q) for q in queries.tolist()]
    assert got.tolist() == want


# -- CART ---------------------------------------------------------------------


def test_single_split_two_points():
    tree = fit_tree([[0.0], [1.0]], ["A", "B"])
    assert tree.threshold[0] == 0.5
    assert tree.predict([[0.0], [1.0]]).tolist() == ["A", "B"]


def test_pure_node_is_a_leaf():
    tree = fit_tree([[0.0], [1.0], [2.0]], [1, 1, 1])
    assert tree.n_nodes == 1


def test_gini_of_balanced_binary_node():
    tree = fit_tree([[0.0], [1.0]], [0, 1])
    assert tree.impurity[0] == 0.5


def test_cart_matches_exhaustive_oracle_sample():
    rng = np.random.default_rng(11)
    for _ in range(50):
        check_cart_against_oracle(rng)


def test_cart_depth_limit_matches_oracle():
    rng = np.random.default_rng(12)
    for _ in range(30):
        X, y = small_instance(rng)
        tree = fit_tree(X, y, max_depth=1)
        oracle = exhaustive_cart(X.tolist(), y.tolist(), max_depth=1)
        assert tree.predict(X).tolist() == [oracle_predict(oracle, x) for x in X.tolist()]
        assert tree.get_depth() <= 1


def test_accepted_splits_reduce_impurity():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 3))
    y = rng.integers(0, 3, size=80)
    tree = fit_tree(X, y)
    for node in np.flatnonzero(~tree.is_leaf):
        l, r = tree.left[node], tree.right[node]
        n = tree.n_node_samples
        child = (n[l] * tree.impurity[l] + n[r] * tree.impurity[r]) / n[node]
        assert tree.impurity[node] - child > 0


def test_regression_tree_fits_step():
    X = np.arange(10, dtype=float)[:, None]
    y = np.where(X[:, 0] < 5, 1.0, 3.0)
    tree = fit_tree(X, y, mode=REGRESSION)
    assert tree.threshold[0] == 4.5
    np.testing.assert_array_equal(tree.predict(X), y)


def test_min_samples_leaf_respected():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 2))
    y = rng.integers(0, 2, size=40)
    tree = fit_tree(X, y, min_samples_leaf=5)
    assert tree.n_node_samples[tree.is_leaf].min() >= 5


def test_fit_tree_errors():
    with pytest.raises(EmptyData):
        fit_tree(np.zeros((0, 2)), [])
    with pytest.raises(ShapeMismatch):
        fit_tree([[1.0], [2.0]], [0])
    tree = fit_tree([[0.0], [1.0]], [0, 1])
    with pytest.raises(DimensionMismatch):
        tree.predict([[0.0, 1.0]])


# -- forests ------------------------------------------------------------------


def test_single_unbagged_tree_equals_cart():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 3))
    y = rng.integers(0, 3, size=30)
    forest = fit_random_forest(X, y, n_trees=1, max_features=None, bootstrap=False)
    np.testing.assert_array_equal(forest.predict(X), fit_tree(X, y).predict(X))


def test_forest_is_deterministic():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 4))
    y = rng.integers(0, 3, size=50)
    a = fit_random_forest(X, y, n_trees=10, seed=9)
    b = fit_random_forest(X, y, n_trees=10, seed=9)
    np.testing.assert_array_equal(feature_importances(a), feature_importances(b))
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.threshold, tb.threshold)


def test_oob_accuracy_on_separable_set():
    forest = fit_random_forest(SEPARABLE_X, SEPARABLE_Y, n_trees=25)
    assert forest.oob_accuracy(SEPARABLE_X, SEPARABLE_Y) >= 0.9


def test_constant_feature_has_zero_importance():
    rng = np.random.default_rng(8)
    X = np.column_stack([rng.uniform(size=60), np.full(60, 2.0)])
    y = (X[:, 0] > 0.5).astype(int)
    imp = feature_importances(fit_random_forest(X, y, n_trees=20))
    assert imp[1] == 0.0
    assert abs(imp.sum() - 1) <= 1e-9


def _walk_decrease(tree, X, y, node, acc, n_root):
    # recompute each split's weighted Gini decrease from the rows routed there
    if tree.feature[node] < 0:
        return
    f, t = tree.feature[node], tree.threshold[node]
    go_left = X[:, f] <= t

    def gini(labels):
        if len(labels) == 0:
            return 0.0
        p = np.bincount(labels) / len(labels)
        return 1 - float(p @ p)

    acc[f] += (len(y) * gini(y) - go_left.sum() * gini(y[go_left]) - (~go_left).sum() * gini(y[~go_left])) / n_root
    _walk_decrease(tree, X[go_left], y[go_left], tree.left[node], acc, n_root)
    _walk_decrease(tree, X[~go_left], y[~go_left], tree.right[node], acc, n_root)


def test_importance_concentrates_on_predictive_feature():
    rng = np.random.default_rng(102)
    X = np.round(rng.uniform(0, 1, (200, 2)), 2)
    y = (X[:, 0] > 0.5).astype(int)
    forest = fit_random_forest(X, y, n_trees=100)
    imp = feature_importances(forest)
    assert imp[0] > 0.9

    # independent accounting: route bootstrap rows through each tree again
    per_tree = []
    for tree, rows in zip(forest.trees, forest.samples):
        acc = np.zeros(2)
        _walk_decrease(tree, X[rows], y[rows], 0, acc, len(rows))
        per_tree.append(acc / acc.sum() if acc.sum() > 0 else acc)
        np.testing.assert_allclose(tree_importances(tree), per_tree[-1], atol=1e-12)
    mean = np.mean(per_tree, axis=0)
    np.testing.assert_allclose(imp, mean / mean.sum(), atol=1e-12)


def test_importances_need_fitted_forest():
    with pytest.raises(UnfittedModel):
        feature_importances(None)


# -- boosting -----------------------------------------------------------------


def test_zero_stages_predicts_prior_argmax():
    y = np.array([0, 0, 1, 2])
    model = fit_gbt(np.zeros((4, 1)), y, n_estimators=0)
    dist, label = predict_gbt(model, [5.0])
    np.testing.assert_allclose(dist, [0.5, 0.25, 0.25], atol=1e-15)
    assert label == 0


def test_line_three_classes_fits_perfectly():
    X = np.array(LINE_X)[:, None]
    model = fit_gbt(X, LINE_Y, learning_rate=0.1, n_estimators=50, max_depth=3)
    assert np.mean(model.predict(X) == np.array(LINE_Y)) == 1.0


@pytest.mark.parametrize("rate", [0.1, 0.05, 0.01])
def test_training_deviance_non_increasing(rate):
    rng = np.random.default_rng(21)
    X = rng.normal(size=(90, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=90) > 0).astype(int) + (X[:, 1] > 0.8)
    model = fit_gbt(X, y, learning_rate=rate, n_estimators=40)
    codes = np.searchsorted(model.classes, y)
    devs = [deviance(codes, s) for s in model.staged_decision_function(X)]
    assert all(b <= a + 1e-12 for a, b in zip(devs, devs[1:]))


def test_vanishing_rate_is_prior_predictor():
    rng = np.random.default_rng(22)
    X = rng.normal(size=(60, 2))
    y = rng.integers(0, 3, size=60)
    model = fit_gbt(X, y, learning_rate=1e-9, n_estimators=30)
    prior = fit_gbt(X, y, n_estimators=0)
    np.testing.assert_array_equal(model.predict(X), prior.predict(X))
    np.testing.assert_allclose(model.predict_proba(X), prior.predict_proba(X), atol=1e-7)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=0, max_value=10_000),
    st.floats(min_value=1e-4, max_value=1.0),
    st.integers(min_value=0, max_value=8),
)
def test_probabilities_sum_to_one(seed, rate, stages):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 3)) * rng.choice([1e-3, 1.0, 1e3])
    y = rng.integers(0, 3, size=25)
    model = fit_gbt(X, y, learning_rate=rate, n_estimators=stages)
    queries = rng.normal(size=(10, 3)) * 1e4
    p = model.predict_proba(queries)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_predict_matches_straight_line_oracle():
    rng = np.random.default_rng(23)
    X = rng.normal(size=(70, 4))
    y = rng.integers(0, 3, size=70)
    model = fit_gbt(X, y, learning_rate=0.1, n_estimators=15)
    data = model_to_dict(model)
    for x in rng.normal(size=(25, 4)):
        dist, label = predict_gbt(model, x)
        np.testing.assert_allclose(dist, straight_line_gbt_proba(data, x.tolist()), atol=1e-9)
        assert label == int(np.argmax(dist))


def test_single_class_is_degenerate():
    model = fit_gbt(np.zeros((5, 2)), [1] * 5)
    assert model.degenerate
    assert model.predict(np.ones((2, 2))).tolist() == [1, 1]


def test_gbt_errors():
    X, y = np.zeros((4, 1)), [0, 1, 0, 1]
    with pytest.raises(InvalidHyperparameter):
        fit_gbt(X, y, learning_rate=0)
    with pytest.raises(InvalidHyperparameter):
        fit_gbt(X, y, n_estimators=-1)
    model = fit_gbt(X, y, n_estimators=2)
    with pytest.raises(DimensionMismatch):
        predict_gbt(model, [1.0, 2.0])


def test_prior_only_model_probabilities():
    model = prior_only_model([0, 0, 0, 2], 3)
    np.testing.assert_allclose(model.predict_proba(np.zeros((1, 3)))[0], [0.75, 0.25])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(24)
    X = rng.normal(size=(50, 3))
    y = rng.integers(0, 3, size=50)
    model = fit_gbt(X, y, learning_rate=0.05, n_estimators=12)
    model.provenance = {"seed": 1}
    save_model(model, tmp_path / "m.json")
    loaded = load_model(tmp_path / "m.json")
    Q = rng.normal(size=(40, 3))
    np.testing.assert_array_equal(loaded.predict_proba(Q), model.predict_proba(Q))
    assert loaded.provenance == {"seed": 1}
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["format_version"] == 1


# -- grid search --------------------------------------------------------------


def test_single_cell_grid_returns_it():
    rng = np.random.default_rng(30)
    X = rng.normal(size=(30, 2))
    y = rng.integers(0, 3, size=30)
    result = grid_search(X, y, HyperGrid((0.1,), (5,)))
    assert result.best == (0.1, 5)


def test_default_grid_has_42_cells():
    rng = np.random.default_rng(31)
    X = rng.normal(size=(45, 3))
    y = rng.integers(0, 3, size=45)
    result = grid_search(X, y)
    assert len(result.cell_scores) == 42
    assert result.best in result.cell_scores
    best_score = result.cell_scores[result.best]
    assert best_score == max(result.cell_scores.values())


def test_staged_scores_equal_separate_fits():
    rng = np.random.default_rng(32)
    X = rng.normal(size=(36, 2))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 1)
    grid = HyperGrid((0.1, 0.05), (3, 6))
    result = grid_search(X, y, grid, seed=5)
    folds = result.folds
    for rate, n in grid.cells:
        accs = []
        for test_idx in folds:
            train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
            model = fit_gbt(X[train_idx], y[train_idx], learning_rate=rate, n_estimators=n)
            accs.append(np.mean(model.predict(X[test_idx]) == y[test_idx]))
        assert result.cell_scores[(rate, n)] == pytest.approx(np.mean(accs), abs=1e-12)


def test_ties_prefer_lower_rate_then_fewer_stages():
    X = np.zeros((9, 1))
    y = np.array([0, 0, 0, 0, 0, 1, 1, 2, 2])
    result = grid_search(X, y, HyperGrid((0.1, 0.05), (10, 5)))
    assert result.best == (0.05, 5)


def test_stratified_folds_cover_rows_once():
    y = np.array([0] * 10 + [1] * 5 + [2] * 2)
    folds, small = stratified_folds(y, 3, seed=0)
    joined = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(joined, np.arange(len(y)))
    assert small == [2]
    for f in folds:
        assert 0 in y[f]


def test_grid_search_errors():
    with pytest.raises(TooFewSamples):
        grid_search(np.zeros((2, 1)), [0, 1])
    with pytest.raises(InvalidHyperparameter):
        HyperGrid((), (10,))
