"""
Random forest: bagged regression trees averaged into one prediction.
"""
import logging
import math
from typing import Any, Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed

from ..models import ModelFamily
from ..schemas import ForestSpec
from .base import TrainedModel, check_training_data
from .tree import RegressionTree, grow_tree

logger = logging.getLogger(__name__)


class ForestModel(TrainedModel):
    family = ModelFamily.FOREST

    def __init__(
        self,
        spec: ForestSpec,
        trees: List[RegressionTree],
        n_features: int,
        feature_names: Optional[List[str]] = None,
    ):
        super().__init__(n_features, feature_names)
        self.spec = spec
        self.trees = trees

    def _predict(self, X: np.ndarray) -> np.ndarray:
        outputs = np.stack([tree.predict(X) for tree in self.trees])
        # fsum is correctly rounded, so the average does not depend on tree order.
        return np.array([math.fsum(column) for column in outputs.T]) / len(self.trees)

    def state_dict(self) -> Dict[str, Any]:
        return {"trees": [tree.to_dict() for tree in self.trees]}


def _grow_member(
    X: np.ndarray,
    y: np.ndarray,
    spec: ForestSpec,
    seed: np.random.SeedSequence,
) -> RegressionTree:
    rng = np.random.default_rng(seed)
    n = y.size
    rows = rng.integers(0, n, size=n) if spec.bootstrap else np.arange(n)
    return grow_tree(
        X[rows],
        y[rows],
        max_depth=spec.max_depth,
        min_samples_leaf=spec.min_samples_leaf,
        max_features=spec.max_features,
        rng=rng,
    )


def fit_forest(
    X: Any,
    y: Any,
    spec: Optional[ForestSpec] = None,
    feature_names: Optional[List[str]] = None,
    jobs: int = 1,
) -> ForestModel:
    """Fit ``n_estimators`` trees on bootstrap resamples.

    Each tree draws from its own child of ``SeedSequence(spec.seed)``, so the result
    is identical for any ``jobs`` value.
    """
    spec = spec or ForestSpec()
    X, y = check_training_data(X, y)
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_estimators)
    trees = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_grow_member)(X, y, spec, seed) for seed in seeds
    )
    logger.debug(f"Fitted forest of {len(trees)} trees on {X.shape[0]} samples")
    return ForestModel(spec, trees, X.shape[1], feature_names)
