"""
Column standardization fitted on the training split only.
"""
import logging
from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel

from ..config import settings

logger = logging.getLogger(__name__)


class Standardization(BaseModel):
    means: List[float]
    stds: List[float]
    constant: List[bool]

    def apply(self, X: Any) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X - np.asarray(self.means)) / np.asarray(self.stds)


def standardize_fit(X: Any, ddof: Optional[int] = None) -> Standardization:
    """Per-column mean and deviation; constant columns get std 1 and are flagged."""
    ddof = settings.standardize_ddof if ddof is None else ddof
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=ddof)
    constant = np.all(X == X[0], axis=0)
    stds = np.where(constant, 1.0, stds)
    if constant.any():
        logger.warning(f"Constant feature columns left unscaled: {np.nonzero(constant)[0].tolist()}")
    return Standardization(means=means.tolist(), stds=stds.tolist(), constant=constant.tolist())
