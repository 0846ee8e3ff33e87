"""JSON persistence for boosted models.

Trees are written as nested node objects. Python's float repr round-trips
exactly, so a reloaded model reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .boosting import GbtModel
from .cart import REGRESSION, DecisionTree

FORMAT_VERSION = 1


def _node_to_dict(tree: DecisionTree, node: int) -> dict:
    if tree.feature[node] < 0:
        return {"value": float(tree.value[node, 0]), "n_samples": int(tree.n_node_samples[node])}
    return {
        "feature": int(tree.feature[node]),
        "threshold": float(tree.threshold[node]),
        "n_samples": int(tree.n_node_samples[node]),
        "left": _node_to_dict(tree, int(tree.left[node])),
        "right": _node_to_dict(tree, int(tree.right[node])),
    }


def tree_to_dict(tree: DecisionTree) -> dict:
    return _node_to_dict(tree, 0)


def tree_from_dict(data: dict, n_features: int, max_depth: int, min_samples_leaf: int) -> DecisionTree:
    feature, threshold, left, right, value, n_node, depth = [], [], [], [], [], [], []

    def visit(node: dict, dep: int) -> int:
        idx = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        n_node.append(int(node.get("n_samples", 0)))
        depth.append(dep)
        if "feature" in node:
            feature[idx] = int(node["feature"])
            threshold[idx] = float(node["threshold"])
            left[idx] = visit(node["left"], dep + 1)
            right[idx] = visit(node["right"], dep + 1)
        else:
            value[idx] = float(node["value"])
        return idx

    visit(data, 0)
    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64)[:, None],
        n_node_samples=np.array(n_node, dtype=np.int64),
        impurity=np.zeros(len(feature)),
        depth=np.array(depth, dtype=np.int64),
        mode=REGRESSION,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        n_features=n_features,
    )


def model_to_dict(model: GbtModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "gradient-boosted-trees",
        "classes": [int(c) for c in model.classes],
        "initial_scores": [float(s) for s in model.initial_scores],
        "learning_rate": model.learning_rate,
        "n_estimators": model.n_estimators,
        "max_depth": model.max_depth,
        "min_samples_leaf": model.min_samples_leaf,
        "n_features": model.n_features,
        "degenerate": model.degenerate,
        "provenance": model.provenance,
        "stages": [[tree_to_dict(t) for t in stage] for stage in model.stages],
    }


def model_from_dict(data: dict) -> GbtModel:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    n_features = int(data["n_features"])
    stages = [
        [tree_from_dict(t, n_features, data["max_depth"], data["min_samples_leaf"]) for t in stage]
        for stage in data["stages"]
    ]
    return GbtModel(
        classes=np.array(data["classes"], dtype=np.int64),
        initial_scores=np.array(data["initial_scores"], dtype=np.float64),
        learning_rate=float(data["learning_rate"]),
        n_estimators=int(data["n_estimators"]),
        max_depth=data["max_depth"],
        min_samples_leaf=data["min_samples_leaf"],
        stages=stages,
        n_features=n_features,
        degenerate=bool(data.get("degenerate", False)),
        provenance=data.get("provenance", {}),
    )


def save_model(model: GbtModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> GbtModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
