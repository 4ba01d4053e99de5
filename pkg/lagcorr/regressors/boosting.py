"""
Gradient-boosted regression trees with L2-shrunk leaves.

Squared-error loss: each round fits a tree to the current residuals (the negative
gradients), leaf values are ``sum(residuals) / (count + l2_lambda)`` and the
ensemble adds ``learning_rate`` times every tree output to the target mean.
"""
import logging
from typing import Any, Dict, List, Optional

import numpy as np

from ..models import ModelFamily
from ..schemas import BoostSpec
from .base import TrainedModel, check_training_data
from .tree import RegressionTree, grow_tree

logger = logging.getLogger(__name__)


class BoostedModel(TrainedModel):
    family = ModelFamily.BOOST

    def __init__(
        self,
        spec: BoostSpec,
        base_score: float,
        trees: List[RegressionTree],
        n_features: int,
        feature_names: Optional[List[str]] = None,
        train_loss: Optional[List[float]] = None,
    ):
        super().__init__(n_features, feature_names)
        self.spec = spec
        self.base_score = base_score
        self.trees = trees
        self.train_loss = list(train_loss or [])

    def _predict(self, X: np.ndarray) -> np.ndarray:
        prediction = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            prediction = prediction + self.spec.learning_rate * tree.predict(X)
        return prediction

    def state_dict(self) -> Dict[str, Any]:
        return {
            "base_score": self.base_score,
            "trees": [tree.to_dict() for tree in self.trees],
            "train_loss": self.train_loss,
        }


def fit_boosted(
    X: Any,
    y: Any,
    spec: Optional[BoostSpec] = None,
    feature_names: Optional[List[str]] = None,
) -> BoostedModel:
    spec = spec or BoostSpec()
    X, y = check_training_data(X, y)
    n = y.size
    base_score = float(np.mean(y))
    prediction = np.full(n, base_score)
    rng = np.random.default_rng(spec.seed)
    batch = max(1, int(round(spec.subsample * n)))

    trees: List[RegressionTree] = []
    train_loss = [float(np.mean((y - prediction) ** 2))]
    for _ in range(spec.n_estimators):
        residuals = y - prediction
        rows = np.sort(rng.choice(n, size=batch, replace=False)) if batch < n else np.arange(n)
        tree = grow_tree(
            X[rows],
            residuals[rows],
            max_depth=spec.max_depth,
            min_samples_leaf=spec.min_samples_leaf,
            l2_lambda=spec.l2_lambda,
        )
        prediction = prediction + spec.learning_rate * tree.predict(X)
        trees.append(tree)
        train_loss.append(float(np.mean((y - prediction) ** 2)))

    if trees:
        logger.debug(f"Boosting: training MSE {train_loss[0]:.4g} -> {train_loss[-1]:.4g} over {len(trees)} rounds")
    return BoostedModel(spec, base_score, trees, X.shape[1], feature_names, train_loss)
