"""
Fully connected regression network trained by backpropagation with Adam.

The default architecture is Dense(100, relu) -> Dense(50, relu) -> Dense(10, relu)
-> Dense(1, linear); inputs are standardized with constants fitted on the training
data and stored with the model.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NonFiniteLoss
from ..models import Activation, ModelFamily
from ..schemas import MlpSpec
from .base import TrainedModel, check_training_data
from .standardize import Standardization, standardize_fit

logger = logging.getLogger(__name__)

Params = List[Tuple[np.ndarray, np.ndarray]]


def parameter_count(spec: MlpSpec, input_dim: int) -> int:
    """Trainable weights plus biases for the given input dimension."""
    total, fan_in = 0, input_dim
    for width in spec.layer_widths:
        total += fan_in * width + width
        fan_in = width
    return total


def init_params(spec: MlpSpec, input_dim: int, rng: np.random.Generator) -> Params:
    """He-uniform weights scaled by fan-in, zero biases."""
    params: Params = []
    fan_in = input_dim
    for width in spec.layer_widths:
        limit = np.sqrt(6.0 / fan_in)
        params.append((rng.uniform(-limit, limit, size=(fan_in, width)), np.zeros(width)))
        fan_in = width
    return params


def forward(
    params: Params,
    X: np.ndarray,
    activations: Sequence[Activation],
) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray]]]:
    """Network output (M,) and per-layer (input, pre-activation) caches."""
    caches = []
    a = X
    for (W, b), activation in zip(params, activations):
        z = a @ W + b
        caches.append((a, z))
        a = np.maximum(z, 0.0) if activation == Activation.RELU else z
    return a[:, 0], caches


def loss_and_gradients(
    params: Params,
    X: np.ndarray,
    y: np.ndarray,
    activations: Sequence[Activation],
) -> Tuple[float, Params]:
    """Mean squared error and its gradient with respect to every weight and bias."""
    output, caches = forward(params, X, activations)
    error = output - y
    loss = float(np.mean(error ** 2))

    grads: Params = [None] * len(params)
    upstream = (2.0 / y.size) * error[:, None]
    for layer in reversed(range(len(params))):
        a_prev, z = caches[layer]
        delta = upstream * (z > 0.0) if activations[layer] == Activation.RELU else upstream
        grads[layer] = (a_prev.T @ delta, delta.sum(axis=0))
        upstream = delta @ params[layer][0].T
    return loss, grads


class _Adam:
    def __init__(self, params: Params, spec: MlpSpec):
        self.spec = spec
        self.step = 0
        self.moments = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        self.squares = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]

    def update(self, params: Params, grads: Params) -> Params:
        spec = self.spec
        self.step += 1
        correction1 = 1.0 - spec.beta1 ** self.step
        correction2 = 1.0 - spec.beta2 ** self.step
        updated = []
        for layer, (param_pair, grad_pair) in enumerate(zip(params, grads)):
            new_pair, moments, squares = [], [], []
            for param, grad, m, v in zip(param_pair, grad_pair, self.moments[layer], self.squares[layer]):
                m = spec.beta1 * m + (1.0 - spec.beta1) * grad
                v = spec.beta2 * v + (1.0 - spec.beta2) * grad * grad
                step = spec.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + spec.epsilon)
                new_pair.append(param - step)
                moments.append(m)
                squares.append(v)
            updated.append(tuple(new_pair))
            self.moments[layer] = tuple(moments)
            self.squares[layer] = tuple(squares)
        return updated


class MlpModel(TrainedModel):
    family = ModelFamily.MLP

    def __init__(
        self,
        spec: MlpSpec,
        params: Params,
        n_features: int,
        feature_names: Optional[List[str]] = None,
        standardization: Optional[Standardization] = None,
        target_mean: float = 0.0,
        target_std: float = 1.0,
        train_loss: Optional[List[float]] = None,
    ):
        super().__init__(n_features, feature_names)
        self.spec = spec
        self.params = params
        self.standardization = standardization
        self.target_mean = target_mean
        self.target_std = target_std
        self.train_loss = list(train_loss or [])

    @property
    def n_parameters(self) -> int:
        return int(sum(W.size + b.size for W, b in self.params))

    def _predict(self, X: np.ndarray) -> np.ndarray:
        if self.standardization is not None:
            X = self.standardization.apply(X)
        output, _ = forward(self.params, X, self.spec.activations)
        return output * self.target_std + self.target_mean

    def state_dict(self) -> Dict[str, Any]:
        return {
            "weights": [W.tolist() for W, _ in self.params],
            "biases": [b.tolist() for _, b in self.params],
            "standardization": self.standardization.model_dump() if self.standardization else None,
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "train_loss": self.train_loss,
        }


def fit_mlp(
    X: Any,
    y: Any,
    spec: Optional[MlpSpec] = None,
    feature_names: Optional[List[str]] = None,
) -> MlpModel:
    """Mini-batch Adam on the squared error; deterministic for a given seed."""
    spec = spec or MlpSpec()
    X, y = check_training_data(X, y)
    n = y.size

    standardization = standardize_fit(X)
    Xs = standardization.apply(X)
    target_mean, target_std = 0.0, 1.0
    if spec.standardize_target:
        target_mean = float(np.mean(y))
        target_std = float(np.std(y)) or 1.0
    ys = (y - target_mean) / target_std

    batch_size = spec.batch_size
    if batch_size > n:
        logger.warning(f"batch_size {batch_size} exceeds {n} samples; using full-batch updates")
        batch_size = n

    init_seed, shuffle_seed = np.random.SeedSequence(spec.seed).spawn(2)
    params = init_params(spec, X.shape[1], np.random.default_rng(init_seed))
    shuffle_rng = np.random.default_rng(shuffle_seed)
    optimizer = _Adam(params, spec)

    epoch_loss: List[float] = []
    for epoch in range(spec.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            rows = order[start:start + batch_size]
            loss, grads = loss_and_gradients(params, Xs[rows], ys[rows], spec.activations)
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"Loss diverged at epoch {epoch}, batch starting at {start}",
                    details={"epoch": epoch, "batch_start": start, "loss": str(loss), "learning_rate": spec.learning_rate},
                )
            params = optimizer.update(params, grads)
            total += loss * rows.size
        epoch_loss.append(total / n)

    logger.debug(f"MLP: epoch loss {epoch_loss[0]:.4g} -> {epoch_loss[-1]:.4g} over {spec.epochs} epochs")
    return MlpModel(
        spec,
        params,
        X.shape[1],
        feature_names,
        standardization=standardization,
        target_mean=target_mean,
        target_std=target_std,
        train_loss=epoch_loss,
    )
