"""Logistic-regression substrate: prediction, loss, gradient, local SGD and FedAvg."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, DimensionError, EmptyDataError, NumericError

PROB_EPS = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Global model: feature weights plus an explicit bias."""

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        if not (np.all(np.isfinite(w)) and math.isfinite(self.bias)):
            raise NumericError("model parameters must be finite")

    @classmethod
    def zeros(cls, d: int) -> "ModelParams":
        return cls(np.zeros(d), 0.0)

    @classmethod
    def from_vector(cls, theta) -> "ModelParams":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(theta[:-1].copy(), theta[-1])

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flatten to ``(weights..., bias)``, the layout used by :func:`gradient`."""
        return np.append(self.weights, self.bias)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.bias == other.bias and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class ClientDataset:
    """One client's examples. Labels are binary, ``1`` being the minority class."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        y = y.reshape(-1)
        if X.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"{X.shape[0]} feature rows but {y.shape[0]} labels"
            )
        if X.shape[0] == 0:
            raise EmptyDataError("client dataset must hold at least one example")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    local_epochs: int = 1
    batch_size: int | str = 10

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError("train.learning_rate", f"must be > 0, got {self.learning_rate}")
        if int(self.local_epochs) != self.local_epochs or self.local_epochs < 1:
            raise ConfigError("train.local_epochs", f"must be an integer >= 1, got {self.local_epochs}")
        bs = self.batch_size
        if bs != "full" and (isinstance(bs, (bool, str)) or int(bs) != bs or bs < 1):
            raise ConfigError("train.batch_size", f'must be a positive integer or "full", got {bs!r}')


def _check_dim(model: ModelParams, X: np.ndarray) -> None:
    if X.shape[-1] != model.d:
        raise DimensionError(f"expected {model.d} features, got {X.shape[-1]}")


def decision_function(model: ModelParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    _check_dim(model, X)
    return X @ model.weights + model.bias


def predict(model: ModelParams, x) -> float | np.ndarray:
    """Probability of the positive class, ``sigmoid(w.x + b)``.

    A single feature vector gives a float; a 2-D array gives one probability per row.
    """
    return expit(decision_function(model, x))


def per_example_losses(model: ModelParams, X, y) -> np.ndarray:
    """Binary cross-entropy of every row, with probabilities clamped to ``[1e-12, 1 - 1e-12]``."""
    p = np.clip(np.atleast_1d(predict(model, np.atleast_2d(X))), PROB_EPS, 1.0 - PROB_EPS)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def per_example_loss(model: ModelParams, x, y) -> float:
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    return float(per_example_losses(model, np.reshape(x, (1, -1)), [y])[0])


def gradient(model: ModelParams, batch: ClientDataset) -> np.ndarray:
    """Gradient of the mean batch loss w.r.t. ``(weights, bias)``; length ``d + 1``."""
    if batch.n == 0:
        raise EmptyDataError("gradient of an empty batch")
    X = batch.features
    _check_dim(model, X)
    p = np.clip(expit(X @ model.weights + model.bias), PROB_EPS, 1.0 - PROB_EPS)
    residual = p - batch.labels
    return np.append(X.T @ residual, residual.sum()) / batch.n


def accuracy(model: ModelParams, data: ClientDataset) -> float:
    pred = (decision_function(model, data.features) > 0).astype(np.int64)
    return float(np.mean(pred == data.labels))


def local_train(model: ModelParams, data: ClientDataset, cfg: TrainConfig, seed) -> ModelParams:
    """Run ``cfg.local_epochs`` passes of mini-batch SGD from ``model``.

    ``seed`` only controls the per-epoch shuffle, so the result is a pure
    function of the arguments.
    """
    _check_dim(model, data.features)
    X, y = data.features, data.labels.astype(np.float64)
    n = data.n
    bs = n if cfg.batch_size == "full" else min(int(cfg.batch_size), n)
    rng = np.random.default_rng(seed)
    w = model.weights.copy()
    b = model.bias
    lr = cfg.learning_rate
    with np.errstate(over="ignore", invalid="ignore"):
        w, b = _sgd_epochs(X, y, w, b, lr, bs, cfg.local_epochs, rng)
    if not (np.all(np.isfinite(w)) and math.isfinite(b)):
        raise NumericError("local training diverged")
    return ModelParams(w, b)


def _sgd_epochs(X, y, w, b, lr, bs, epochs, rng):
    n = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            xb = X[idx]
            residual = np.clip(expit(xb @ w + b), PROB_EPS, 1.0 - PROB_EPS) - y[idx]
            gw = xb.T @ residual / len(idx)
            gb = residual.sum() / len(idx)
            if not (np.all(np.isfinite(gw)) and math.isfinite(gb)):
                raise NumericError("non-finite gradient during local training")
            w = w - lr * gw
            b = b - lr * gb
    return w, b


def fedavg_aggregate(updates: Sequence[tuple[ModelParams, int]]) -> ModelParams:
    """Size-weighted mean of client models: ``sum(n_k * w_k) / sum(n_k)``."""
    if len(updates) == 0:
        raise EmptyDataError("cannot aggregate an empty list of updates")
    d = updates[0][0].d
    thetas = np.empty((len(updates), d + 1))
    sizes = np.empty(len(updates))
    for i, (m, n_k) in enumerate(updates):
        if m.d != d:
            raise DimensionError(f"update {i} has dimension {m.d}, expected {d}")
        if n_k <= 0:
            raise ValueError(f"update {i} has non-positive size {n_k}")
        thetas[i] = m.to_vector()
        sizes[i] = n_k
    return ModelParams.from_vector(sizes @ thetas / sizes.sum())
