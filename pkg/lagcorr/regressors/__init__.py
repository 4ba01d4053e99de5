"""
Regression models trained from scratch: single trees, random forests, gradient-boosted
trees and a multilayer perceptron, behind one fit/predict interface.
"""
from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel

from ..models import ModelFamily
from .base import TrainedModel, check_matrix
from .boosting import BoostedModel, fit_boosted
from .forest import ForestModel, fit_forest
from .mlp import MlpModel, fit_mlp, loss_and_gradients, parameter_count
from .serialization import SPEC_TYPES, load_model, model_from_dict, model_to_dict, save_model
from .standardize import Standardization, standardize_fit
from .tree import RegressionTree, TreeModel, best_split, fit_tree, grow_tree


def fit_model(
    family: ModelFamily,
    X: Any,
    y: Any,
    spec: Optional[BaseModel] = None,
    feature_names: Optional[List[str]] = None,
    jobs: int = 1,
) -> TrainedModel:
    """Fit the learner of ``family``; ``spec`` defaults to that family's defaults."""
    family = ModelFamily(family)
    spec = spec if spec is not None else SPEC_TYPES[family]()
    if not isinstance(spec, SPEC_TYPES[family]):
        raise TypeError(f"{family.value} expects a {SPEC_TYPES[family].__name__}, got {type(spec).__name__}")
    if family == ModelFamily.TREE:
        return fit_tree(X, y, spec, feature_names)
    if family == ModelFamily.FOREST:
        return fit_forest(X, y, spec, feature_names, jobs=jobs)
    if family == ModelFamily.BOOST:
        return fit_boosted(X, y, spec, feature_names)
    return fit_mlp(X, y, spec, feature_names)


def predict(model: TrainedModel, X: Any) -> np.ndarray:
    return model.predict(X)


__all__ = [
    "BoostedModel",
    "ForestModel",
    "MlpModel",
    "RegressionTree",
    "SPEC_TYPES",
    "Standardization",
    "TrainedModel",
    "TreeModel",
    "best_split",
    "check_matrix",
    "fit_boosted",
    "fit_forest",
    "fit_mlp",
    "fit_model",
    "fit_tree",
    "grow_tree",
    "load_model",
    "loss_and_gradients",
    "model_from_dict",
    "model_to_dict",
    "parameter_count",
    "predict",
    "save_model",
    "standardize_fit",
]
