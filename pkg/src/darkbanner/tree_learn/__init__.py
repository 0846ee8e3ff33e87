"""From-scratch tree learners: CART, random forests, boosting, grid search."""

from .boosting import GbtModel, deviance, fit_gbt, predict_gbt, prior_only_model, softmax
from .cart import CLASSIFICATION, REGRESSION, DecisionTree, fit_tree
from .forest import RandomForest, feature_importances, fit_random_forest
from .search import HyperGrid, GridResult, grid_search, stratified_folds
from .serialize import load_model, model_from_dict, model_to_dict, save_model

__all__ = [
    "CLASSIFICATION",
    "REGRESSION",
    "DecisionTree",
    "GbtModel",
    "GridResult",
    "HyperGrid",
    "RandomForest",
    "deviance",
    "feature_importances",
    "fit_gbt",
    "fit_random_forest",
    "fit_tree",
    "grid_search",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict_gbt",
    "prior_only_model",
    "save_model",
    "softmax",
    "stratified_folds",
]
