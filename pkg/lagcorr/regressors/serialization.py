"""
Self-describing JSON model files.

A file holds the format version, the model family, its spec, the feature names and
the learned state (tree node arrays, network weights, standardization constants).
Floats are written in shortest round-trip form, so a loaded model predicts
bit-identically to the saved one.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from ..config import settings
from ..errors import ModelFormatError, SourceNotFound
from ..models import ModelFamily
from ..schemas import BoostSpec, ForestSpec, MlpSpec, TreeSpec
from ..utils import write_json
from .base import TrainedModel
from .boosting import BoostedModel
from .forest import ForestModel
from .mlp import MlpModel
from .standardize import Standardization
from .tree import RegressionTree, TreeModel

logger = logging.getLogger(__name__)

SPEC_TYPES = {
    ModelFamily.TREE: TreeSpec,
    ModelFamily.FOREST: ForestSpec,
    ModelFamily.BOOST: BoostSpec,
    ModelFamily.MLP: MlpSpec,
}


def model_to_dict(model: TrainedModel) -> Dict[str, Any]:
    return {
        "format_version": settings.model_format_version,
        "family": model.family.value,
        "spec": model.spec.model_dump(mode="json"),
        "n_features": model.n_features,
        "feature_names": model.feature_names,
        "state": model.state_dict(),
    }


def model_from_dict(data: Dict[str, Any]) -> TrainedModel:
    version = data.get("format_version")
    if version != settings.model_format_version:
        raise ModelFormatError(
            f"Unsupported model format version {version!r}",
            details={"expected": settings.model_format_version, "got": version},
        )
    try:
        family = ModelFamily(data["family"])
        spec = SPEC_TYPES[family](**data["spec"])
        n_features = int(data["n_features"])
        names = data["feature_names"]
        state = data["state"]

        if family == ModelFamily.TREE:
            return TreeModel(
                spec,
                RegressionTree.from_dict(state["tree"]),
                n_features,
                names,
                degenerate_target=state["degenerate_target"],
            )
        if family == ModelFamily.FOREST:
            trees = [RegressionTree.from_dict(tree) for tree in state["trees"]]
            return ForestModel(spec, trees, n_features, names)
        if family == ModelFamily.BOOST:
            trees = [RegressionTree.from_dict(tree) for tree in state["trees"]]
            return BoostedModel(spec, state["base_score"], trees, n_features, names, state["train_loss"])

        params = [
            (np.asarray(W, dtype=float), np.asarray(b, dtype=float))
            for W, b in zip(state["weights"], state["biases"])
        ]
        standardization = state.get("standardization")
        return MlpModel(
            spec,
            params,
            n_features,
            names,
            standardization=Standardization(**standardization) if standardization else None,
            target_mean=state["target_mean"],
            target_std=state["target_std"],
            train_loss=state["train_loss"],
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"Malformed model file: {e}") from e


def save_model(model: TrainedModel, path: Union[str, Path]) -> Path:
    path = write_json(path, model_to_dict(model))
    logger.info(f"Saved {model.family.value} model to {path}")
    return path


def load_model(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise SourceNotFound(f"Model file not found: {path}", details={"path": str(path)})
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path} is not valid JSON: {e}") from e
    return model_from_dict(data)
