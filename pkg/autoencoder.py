#!/usr/bin/env python3
"""
Dense autoencoder trained from scratch with numpy.

Topology follows the deployed model: 16 -> 16 -> 32 -> 64 -> 64 (pass-through,
no parameters) -> 64 -> 32 -> 16, ReLU hidden layers and a linear output,
9696 trainable parameters. Training minimizes the mean reconstruction MSE with
mini-batch Adam; hyperparameters come from a seeded random search scored by
K-fold validation loss.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import KFold

from errors import DimensionMismatch, EmptyDataset, InvalidArgument, TooFewSamples

logger = logging.getLogger(__name__)

INPUT_WIDTH = 16


class Activation(str, Enum):
    RELU = "relu"
    LINEAR = "linear"


ACTIVATION_TAGS = {Activation.LINEAR: 0, Activation.RELU: 1}


@dataclass(frozen=True)
class LayerSpec:
    output_width: int
    trainable: bool = True
    activation: Activation = Activation.RELU

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.output_width <= 0:
            raise InvalidArgument(f"layer width must be > 0, got {self.output_width}")


DEFAULT_LAYERS = [
    LayerSpec(16),
    LayerSpec(32),
    LayerSpec(64),
    LayerSpec(64, trainable=False),
    LayerSpec(64),
    LayerSpec(32),
    LayerSpec(16, activation=Activation.LINEAR),
]
DEFAULT_PARAMETER_COUNTS = [272, 544, 2112, 0, 4160, 2080, 528]


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


class DenseAutoencoder:
    """Stack of dense layers; non-trainable layers apply their activation only."""

    def __init__(self, layers: Sequence[LayerSpec], weights: List[Optional[np.ndarray]],
                 biases: List[Optional[np.ndarray]], input_width: int = INPUT_WIDTH):
        self.layers = list(layers)
        self.weights = weights
        self.biases = biases
        self.input_width = input_width
        self._check_shapes()

    def _check_shapes(self) -> None:
        width = self.input_width
        for i, (spec, w, b) in enumerate(zip(self.layers, self.weights, self.biases)):
            if spec.trainable:
                if w is None or w.shape != (spec.output_width, width) or b is None or b.shape != (spec.output_width,):
                    raise DimensionMismatch(f"layer {i}: parameters do not match {width} -> {spec.output_width}")
            elif spec.output_width != width:
                raise InvalidArgument(f"layer {i}: pass-through layer must keep width {width}")
            width = spec.output_width
        if len(self.weights) != len(self.layers) or len(self.biases) != len(self.layers):
            raise DimensionMismatch("one weight/bias entry per layer expected")

    @property
    def output_width(self) -> int:
        return self.layers[-1].output_width

    @property
    def widths(self) -> List[int]:
        return [self.input_width] + [spec.output_width for spec in self.layers]

    def parameter_counts(self) -> List[int]:
        return [w.size + b.size if spec.trainable else 0
                for spec, w, b in zip(self.layers, self.weights, self.biases)]

    @property
    def parameter_count(self) -> int:
        return sum(self.parameter_counts())

    def trainable_params(self) -> List[np.ndarray]:
        params = []
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            if spec.trainable:
                params.extend([w, b])
        return params

    def copy(self) -> "DenseAutoencoder":
        return DenseAutoencoder(
            self.layers,
            [None if w is None else w.copy() for w in self.weights],
            [None if b is None else b.copy() for b in self.biases],
            self.input_width,
        )

    def to_dict(self) -> Dict:
        return {
            "input_width": self.input_width,
            "layers": [{"output_width": s.output_width, "trainable": s.trainable, "activation": s.activation.value}
                       for s in self.layers],
            "weights": [None if w is None else w.tolist() for w in self.weights],
            "biases": [None if b is None else b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DenseAutoencoder":
        layers = [LayerSpec(**spec) for spec in data["layers"]]
        weights = [None if w is None else np.asarray(w, dtype=np.float64) for w in data["weights"]]
        biases = [None if b is None else np.asarray(b, dtype=np.float64) for b in data["biases"]]
        return cls(layers, weights, biases, data["input_width"])


def build_model(seed: int, layers: Sequence[LayerSpec] = DEFAULT_LAYERS,
                input_width: int = INPUT_WIDTH) -> DenseAutoencoder:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    width = input_width
    for spec in layers:
        if spec.trainable:
            limit = np.sqrt(6.0 / (width + spec.output_width))
            weights.append(rng.uniform(-limit, limit, size=(spec.output_width, width)))
            biases.append(np.zeros(spec.output_width))
        else:
            weights.append(None)
            biases.append(None)
        width = spec.output_width
    return DenseAutoencoder(layers, weights, biases, input_width)


def summary(model: DenseAutoencoder) -> List[Tuple[str, int, int]]:
    """(layer name, output width, parameter count) rows, total row last."""
    rows = []
    for i, (spec, count) in enumerate(zip(model.layers, model.parameter_counts())):
        name = "dense" if i == 0 else f"dense_{i}"
        rows.append((name, spec.output_width, count))
    rows.append(("total", model.output_width, model.parameter_count))
    return rows


def _as_batch(model: DenseAutoencoder, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_width:
        raise DimensionMismatch(f"model takes {model.input_width} inputs, got {x.shape[-1]}")
    return x


def forward(model: DenseAutoencoder, x) -> np.ndarray:
    """Reconstruction of one vector (16,) or a batch (n, 16)."""
    a = _as_batch(model, x)
    for spec, w, b in zip(model.layers, model.weights, model.biases):
        z = a @ w.T + b if spec.trainable else a
        a = _activate(z, spec.activation)
    return a


def reconstruction_mse(x, x_hat) -> np.ndarray:
    """Mean squared error over the last axis: (1/n) sum (a_j - a_hat_j)^2."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {x_hat.shape}")
    err = np.mean((x - x_hat) ** 2, axis=-1)
    return float(err) if err.ndim == 0 else err


def loss_and_gradients(model: DenseAutoencoder, batch) -> Tuple[float, List[Optional[np.ndarray]], List[Optional[np.ndarray]]]:
    """Mean reconstruction MSE of a batch and its gradients per layer."""
    x = _as_batch(model, np.atleast_2d(batch))
    activations = [x]
    pre_activations = []
    a = x
    for spec, w, b in zip(model.layers, model.weights, model.biases):
        z = a @ w.T + b if spec.trainable else a
        pre_activations.append(z)
        a = _activate(z, spec.activation)
        activations.append(a)

    diff = a - x
    loss = float(np.mean(diff ** 2))
    grad_a = 2.0 * diff / diff.size

    grads_w: List[Optional[np.ndarray]] = [None] * len(model.layers)
    grads_b: List[Optional[np.ndarray]] = [None] * len(model.layers)
    for i in reversed(range(len(model.layers))):
        spec = model.layers[i]
        grad_z = grad_a * _activation_grad(pre_activations[i], spec.activation)
        if spec.trainable:
            grads_w[i] = grad_z.T @ activations[i]
            grads_b[i] = grad_z.sum(axis=0)
            grad_a = grad_z @ model.weights[i]
        else:
            grad_a = grad_z
    return loss, grads_w, grads_b


class AdamOptimizer:
    """Adam with bias-corrected moments, updating arrays in place."""

    def __init__(self, learning_rate: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-7):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m: List[np.ndarray] = []
        self._v: List[np.ndarray] = []

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if not self._m:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1 - self.beta1 ** self.t
        correction2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 150
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    seed: int = 1234
    # step decay: lr * lr_decay ** (epoch // lr_step_epochs); 0 keeps lr constant
    lr_step_epochs: int = 0
    lr_decay: float = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise InvalidArgument(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_step_epochs < 0:
            raise InvalidArgument(f"lr_step_epochs must be >= 0, got {self.lr_step_epochs}")
        if not 0 < self.lr_decay <= 1:
            raise InvalidArgument(f"lr_decay must be in (0, 1], got {self.lr_decay}")

    @classmethod
    def experimental(cls, seed: int = 1234) -> "TrainConfig":
        return cls(learning_rate=0.01, batch_size=32, epochs=150, seed=seed, lr_step_epochs=25, lr_decay=0.5)

    @classmethod
    def simulation(cls, seed: int = 1234) -> "TrainConfig":
        # 32 over-fits the smaller simulation-style set
        return cls(learning_rate=0.01, batch_size=28, epochs=150, seed=seed, lr_step_epochs=25, lr_decay=0.5)

    def learning_rate_at(self, epoch: int) -> float:
        if self.lr_step_epochs == 0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_step_epochs)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: DenseAutoencoder
    loss_history: List[float]
    val_history: List[float] = field(default_factory=list)


def train(model: DenseAutoencoder, features, cfg: TrainConfig, validation=None) -> TrainResult:
    """Mini-batch Adam on reconstruction MSE; returns a trained copy."""
    x = np.asarray(features, dtype=np.float64)
    if x.size == 0:
        raise EmptyDataset("no training vectors")
    x = _as_batch(model, np.atleast_2d(x))

    trained = model.copy()
    optimizer = AdamOptimizer(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    params = trained.trainable_params()
    rng = np.random.default_rng(cfg.seed)
    val = None if validation is None or len(validation) == 0 else _as_batch(model, validation)

    history, val_history = [], []
    for epoch in range(cfg.epochs):
        optimizer.learning_rate = cfg.learning_rate_at(epoch)
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), cfg.batch_size):
            batch = x[order[start:start + cfg.batch_size]]
            loss, grads_w, grads_b = loss_and_gradients(trained, batch)
            grads = []
            for spec, gw, gb in zip(trained.layers, grads_w, grads_b):
                if spec.trainable:
                    grads.extend([gw, gb])
            optimizer.step(params, grads)
            total += loss * len(batch)
        history.append(total / len(x))
        if val is not None:
            val_history.append(float(np.mean(reconstruction_mse(val, forward(trained, val)))))
        if (epoch + 1) % 25 == 0:
            logger.debug("[TRAIN] epoch %d/%d loss %.6g", epoch + 1, cfg.epochs, history[-1])

    logger.info("[TRAIN] %d epochs on %d vectors, final loss %.6g", cfg.epochs, len(x), history[-1])
    return TrainResult(trained, history, val_history)


def split_indices(n: int, fractions: Tuple[float, float, float] = (0.5, 0.2, 0.3),
                  seed: int = 1234) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random disjoint train/val/test index sets of the given fractions."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidArgument(f"fractions must be three nonnegative values summing to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split_dataset(features, fractions: Tuple[float, float, float] = (0.5, 0.2, 0.3), seed: int = 1234):
    """(train, val, test) subsets of a feature table."""
    table = np.asarray(features, dtype=np.float64)
    train_idx, val_idx, test_idx = split_indices(len(table), fractions, seed)
    return table[train_idx], table[val_idx], table[test_idx]


def kfold_indices(features, k: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """(train, val) row indices per fold, assigned by content.

    Identical rows always land in the same fold, so a repeated vector never
    sits on both sides of a split.
    """
    x = np.asarray(features, dtype=np.float64)
    if k < 2:
        raise InvalidArgument(f"k must be >= 2, got {k}")
    unique, inverse = np.unique(x.reshape(len(x), -1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    if len(unique) < k:
        raise TooFewSamples(f"{len(unique)} distinct vectors cannot be split into {k} folds")

    folds = []
    for _, val_groups in KFold(n_splits=k, shuffle=True, random_state=seed % (2 ** 32)).split(unique):
        in_val = np.isin(inverse, val_groups)
        folds.append((np.flatnonzero(~in_val), np.flatnonzero(in_val)))
    return folds


def kfold_score(features, cfg: TrainConfig, k: int = 5, workers: int = 1) -> float:
    """Mean validation reconstruction MSE over k freshly trained models."""
    x = np.asarray(features, dtype=np.float64)
    folds = kfold_indices(x, k, cfg.seed)

    def score_fold(item) -> float:
        fold, (train_idx, val_idx) = item
        fold_cfg = replace(cfg, seed=cfg.seed + fold)
        result = train(build_model(fold_cfg.seed), x[train_idx], fold_cfg)
        val = x[val_idx]
        return float(np.mean(reconstruction_mse(val, forward(result.model, val))))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(score_fold, enumerate(folds)))
    else:
        scores = [score_fold(item) for item in enumerate(folds)]
    return float(np.mean(scores))


@dataclass(frozen=True)
class SearchSpace:
    learning_rate: Tuple[float, ...] = (0.001, 0.01, 0.1)
    batch_size: Tuple[int, ...] = (16, 28, 32, 64)
    epochs: Tuple[int, ...] = (50, 100, 150, 200)
    iterations: int = 10

    def __post_init__(self):
        if not self.learning_rate or not self.batch_size or not self.epochs:
            raise InvalidArgument("every search-space axis needs at least one candidate")
        if self.iterations < 1:
            raise InvalidArgument(f"iterations must be >= 1, got {self.iterations}")


@dataclass
class SearchResult:
    best: TrainConfig
    best_score: float
    trials: List[Tuple[TrainConfig, float]]


def random_search(space: SearchSpace, features, seed: int, k: int = 5, workers: int = 1,
                  base: Optional[TrainConfig] = None) -> SearchResult:
    """Sample space.iterations configs with replacement, keep the lowest K-fold score.

    Axes outside the search space (Adam moments, lr decay) come from base.
    """
    base = base or TrainConfig()
    rng = np.random.default_rng(seed)
    configs = []
    for trial in range(space.iterations):
        configs.append(replace(
            base,
            learning_rate=float(rng.choice(space.learning_rate)),
            batch_size=int(rng.choice(space.batch_size)),
            epochs=int(rng.choice(space.epochs)),
            seed=seed + 1000 * (trial + 1),
        ))

    def score(cfg: TrainConfig) -> float:
        value = kfold_score(features, cfg, k)
        logger.info("[SEARCH] lr=%g batch=%d epochs=%d -> %.6g", cfg.learning_rate, cfg.batch_size, cfg.epochs, value)
        return value

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(score, configs))
    else:
        scores = [score(cfg) for cfg in configs]

    trials = list(zip(configs, scores))
    best_index = int(np.argmin(scores))
    best = configs[best_index]
    logger.info("[SEARCH] best of %d trials: lr=%g batch=%d epochs=%d (%.6g)",
                len(trials), best.learning_rate, best.batch_size, best.epochs, scores[best_index])
    return SearchResult(best, scores[best_index], trials)
