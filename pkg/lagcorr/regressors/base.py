"""
Shared input checks and the common interface of fitted models.
"""
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import DimensionMismatch, LengthMismatch
from ..models import ModelFamily


def check_matrix(X: Any, n_features: Optional[int] = None) -> np.ndarray:
    """Validate a feature matrix: 2-D, at least one row and column, all finite."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DimensionMismatch(f"feature matrix must be M x N with M, N >= 1, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(
            f"model was trained on {n_features} features, got {X.shape[1]}",
            details={"expected": n_features, "got": int(X.shape[1])},
        )
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains missing or non-finite values")
    return X


def check_training_data(X: Any, y: Any) -> Tuple[np.ndarray, np.ndarray]:
    X = check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise LengthMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]} values")
    if not np.isfinite(y).all():
        raise ValueError("target contains missing or non-finite values")
    return X, y


class TrainedModel:
    """A fitted regressor: ``predict`` is total over any matrix with ``n_features`` columns."""

    family: ModelFamily

    def __init__(self, n_features: int, feature_names: Optional[List[str]] = None):
        self.n_features = n_features
        self.feature_names = list(feature_names) if feature_names else [f"x{i}" for i in range(n_features)]

    def predict(self, X: Any) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        return self._predict(X)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_dict(self) -> Dict[str, Any]:
        raise NotImplementedError
