"""
Binary regression trees grown by squared-error (variance) reduction.

Trees are stored as flat node arrays so that prediction is vectorized and the
fitted state serializes to plain lists.
"""
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..models import ModelFamily
from ..schemas import TreeSpec
from .base import TrainedModel, check_training_data

logger = logging.getLogger(__name__)

LEAF = -1

# A split must remove more than this fraction of the node's squared error.
_MIN_RELATIVE_GAIN = 1e-12


class RegressionTree:
    def __init__(
        self,
        feature: List[int],
        threshold: List[float],
        left: List[int],
        right: List[int],
        value: List[float],
        n_samples: List[int],
    ):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf reached by every row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> Dict[str, list]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "RegressionTree":
        return cls(**data)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    min_samples_leaf: int = 1,
    features: Optional[np.ndarray] = None,
) -> Optional[Tuple[int, float, float]]:
    """Best (feature, threshold, gain) over midpoints between distinct sorted values.

    Returns None when no admissible split reduces the squared error. Ties keep the
    first feature and the lowest threshold.
    """
    n = y.size
    centered = y - y.mean()
    parent_sse = float(np.dot(centered, centered))
    if n < 2 * min_samples_leaf or parent_sse == 0.0:
        return None
    features = np.arange(X.shape[1]) if features is None else features

    best: Optional[Tuple[int, float, float]] = None
    best_gain = _MIN_RELATIVE_GAIN * parent_sse
    for f in features:
        order = np.argsort(X[:, f], kind="mergesort")
        xs = X[order, f]
        ys = centered[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)

        # Candidate i puts sorted rows 0..i on the left.
        i = np.arange(min_samples_leaf - 1, n - min_samples_leaf)
        i = i[xs[i] < xs[i + 1]]
        if i.size == 0:
            continue
        n_left = i + 1.0
        n_right = n - n_left
        sum_left = csum[i]
        sum_right = csum[-1] - sum_left
        sse_left = csq[i] - sum_left ** 2 / n_left
        sse_right = (csq[-1] - csq[i]) - sum_right ** 2 / n_right
        gain = parent_sse - (sse_left + sse_right)

        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            lo, hi = xs[i[k]], xs[i[k] + 1]
            threshold = (lo + hi) / 2.0
            if not lo <= threshold < hi:
                threshold = lo
            best_gain = float(gain[k])
            best = (int(f), float(threshold), best_gain)
    return best


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    l2_lambda: float = 0.0,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> RegressionTree:
    """Grow a tree depth-first.

    Leaves predict ``sum(y) / (count + l2_lambda)``, the plain mean when
    ``l2_lambda`` is 0. With ``max_features`` set, each split considers a random
    feature subset drawn from ``rng``.
    """
    n_features = X.shape[1]
    subsample = max_features is not None and max_features < n_features
    if subsample and rng is None:
        raise ValueError("max_features requires a random generator")

    feature: List[int] = [LEAF]
    threshold: List[float] = [0.0]
    left: List[int] = [LEAF]
    right: List[int] = [LEAF]
    value: List[float] = [0.0]
    n_samples: List[int] = [0]

    stack = [(0, np.arange(y.size), 0)]
    while stack:
        node, rows, depth = stack.pop()
        y_node = y[rows]
        value[node] = float(y_node.sum() / (rows.size + l2_lambda))
        n_samples[node] = int(rows.size)
        if max_depth is not None and depth >= max_depth:
            continue

        candidates = np.sort(rng.choice(n_features, size=max_features, replace=False)) if subsample else None
        split = best_split(X[rows], y_node, min_samples_leaf, candidates)
        if split is None:
            continue

        f, thr, _ = split
        goes_left = X[rows, f] <= thr
        left_id, right_id = len(feature), len(feature) + 1
        for _ in range(2):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(0.0)
            n_samples.append(0)
        feature[node], threshold[node] = f, thr
        left[node], right[node] = left_id, right_id
        stack.append((right_id, rows[~goes_left], depth + 1))
        stack.append((left_id, rows[goes_left], depth + 1))

    return RegressionTree(feature, threshold, left, right, value, n_samples)


class TreeModel(TrainedModel):
    family = ModelFamily.TREE

    def __init__(
        self,
        spec: TreeSpec,
        tree: RegressionTree,
        n_features: int,
        feature_names: Optional[List[str]] = None,
        degenerate_target: bool = False,
    ):
        super().__init__(n_features, feature_names)
        self.spec = spec
        self.tree = tree
        self.degenerate_target = degenerate_target

    def _predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree.predict(X)

    def state_dict(self) -> Dict[str, Any]:
        return {"tree": self.tree.to_dict(), "degenerate_target": self.degenerate_target}


def fit_tree(X: Any, y: Any, spec: Optional[TreeSpec] = None, feature_names: Optional[List[str]] = None) -> TreeModel:
    """Fit a single regression tree; a constant target yields a flagged root-only tree."""
    spec = spec or TreeSpec()
    X, y = check_training_data(X, y)
    degenerate = bool(np.all(y == y[0]))
    if degenerate:
        logger.warning("Constant target: fitting a single-leaf tree")
    tree = grow_tree(X, y, max_depth=spec.max_depth, min_samples_leaf=spec.min_samples_leaf)
    return TreeModel(spec, tree, X.shape[1], feature_names, degenerate_target=degenerate)
