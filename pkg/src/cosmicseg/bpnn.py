"""Feed-forward sigmoid network trained by per-sample backpropagation.

The loss for one sample is ``0.5 * sum((output - target)**2)``; every
non-input layer uses the logistic sigmoid. Training follows a three-way
split: the training part drives the weight updates, the validation part
decides when to stop (early stopping with patience), and the test part is
only ever scored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import (
    BadTopology,
    ConfigError,
    DimensionMismatch,
    EmptyDataset,
    EmptySet,
    NumericError,
)

SET_NAMES = ("training", "validation", "test")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class MlpNetwork:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # weights[l] has shape (layer_sizes[l+1], layer_sizes[l])
    biases: list[np.ndarray]
    seed: int | None = None
    activation: str = "sigmoid"

    def __post_init__(self):
        sizes = list(self.layer_sizes)
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise BadTopology("need one weight matrix and bias vector per non-input layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise BadTopology(
                    f"layer {l}: weight {w.shape} / bias {b.shape} do not match sizes {sizes}"
                )

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
            self.activation,
        )

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> np.ndarray:
        """All parameters flattened as W0, b0, W1, b1, ..."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_parameters(self, flat: np.ndarray) -> None:
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = flat[pos:pos + b.size]
            pos += b.size

    def equals(self, other: "MlpNetwork") -> bool:
        return (
            list(self.layer_sizes) == list(other.layer_sizes)
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layer_sizes": [int(n) for n in self.layer_sizes],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": self.activation,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        # json emits floats with repr(), the shortest string that round-trips
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpNetwork":
        if doc.get("activation", "sigmoid") != "sigmoid":
            raise ConfigError(f"unsupported activation {doc.get('activation')!r}")
        sizes = [int(n) for n in doc["layer_sizes"]]
        weights = [np.array(w, dtype=np.float64).reshape(sizes[l + 1], sizes[l])
                   for l, w in enumerate(doc["weights"])]
        biases = [np.array(b, dtype=np.float64).reshape(sizes[l + 1])
                  for l, b in enumerate(doc["biases"])]
        return cls(sizes, weights, biases, doc.get("seed"), "sigmoid")

    @classmethod
    def from_json(cls, text: str) -> "MlpNetwork":
        return cls.from_dict(json.loads(text))


def init_network(layer_sizes: Sequence[int], seed: int = 0) -> MlpNetwork:
    """Weights and biases drawn uniformly from [-0.5, 0.5]."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise BadTopology(f"need >= 2 layers of size >= 1, got {list(layer_sizes)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.uniform(-0.5, 0.5, size=(n_out, n_in)))
        biases.append(rng.uniform(-0.5, 0.5, size=n_out))
    return MlpNetwork(sizes, weights, biases, seed)


def _check_vector(x, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != n:
        raise DimensionMismatch(f"{what} has length {x.size}, network expects {n}")
    return x


def forward(net: MlpNetwork, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Return the output vector and the activations of every layer (input first)."""
    a = _check_vector(x, net.n_inputs, "input")
    if not np.all(np.isfinite(a)):
        raise ValueError("input contains non-finite values")
    activations = [a]
    for w, b in zip(net.weights, net.biases):
        a = sigmoid(w @ a + b)
        activations.append(a)
    return a, activations


def predict(net: MlpNetwork, X) -> np.ndarray:
    """Batched forward pass; rows of ``X`` are samples."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.shape[1] != net.n_inputs:
        raise DimensionMismatch(f"samples have {A.shape[1]} features, network expects {net.n_inputs}")
    for w, b in zip(net.weights, net.biases):
        A = sigmoid(A @ w.T + b)
    return A


def gradients(net: MlpNetwork, x, target) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss and its gradients with respect to every weight matrix and bias."""
    t = _check_vector(target, net.n_outputs, "target")
    out, acts = forward(net, x)
    diff = out - t
    loss = 0.5 * float(diff @ diff)
    delta = diff * out * (1.0 - out)
    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.weights)
    for l in range(len(net.weights) - 1, -1, -1):
        grad_w[l] = np.outer(delta, acts[l])
        grad_b[l] = delta.copy()
        if l > 0:
            a = acts[l]
            delta = (net.weights[l].T @ delta) * a * (1.0 - a)
    return loss, grad_w, grad_b


def backprop_step(net: MlpNetwork, x, target, lr: float) -> tuple[MlpNetwork, float]:
    """One gradient-descent step on a single sample.

    Returns the updated copy of the network and the loss measured before
    the update.
    """
    if not lr > 0:
        raise ConfigError("learning rate must be positive")
    loss, gw, gb = gradients(net, x, target)
    new = net.copy()
    for l in range(len(new.weights)):
        new.weights[l] -= lr * gw[l]
        new.biases[l] -= lr * gb[l]
    return new, loss


def sample_loss(net: MlpNetwork, x, target) -> float:
    out, _ = forward(net, x)
    d = out - _check_vector(target, net.n_outputs, "target")
    return 0.5 * float(d @ d)


# -- compiled SGD epoch -------------------------------------------------------

def _layout(sizes):
    sizes = np.asarray(sizes, dtype=np.int64)
    n_layers = sizes.size - 1
    w_off = np.zeros(n_layers, dtype=np.int64)
    b_off = np.zeros(n_layers, dtype=np.int64)
    pos = 0
    for l in range(n_layers):
        w_off[l] = pos
        pos += sizes[l] * sizes[l + 1]
        b_off[l] = pos
        pos += sizes[l + 1]
    a_off = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    return sizes, w_off, b_off, a_off


@numba.njit(cache=True)
def _sgd_epoch(params, sizes, w_off, b_off, a_off, X, Y, order, lr):
    n_layers = sizes.size - 1
    act = np.empty(a_off[-1])
    delta = np.empty(a_off[-1])
    for s in order:
        for j in range(sizes[0]):
            act[j] = X[s, j]
        for l in range(n_layers):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            for i in range(n_out):
                z = params[b_off[l] + i]
                for j in range(n_in):
                    z += params[w_off[l] + i * n_in + j] * act[a_off[l] + j]
                if z >= 0:
                    a = 1.0 / (1.0 + math.exp(-z))
                else:
                    ez = math.exp(z)
                    a = ez / (1.0 + ez)
                act[a_off[l + 1] + i] = a
        top = a_off[n_layers]
        for i in range(sizes[n_layers]):
            a = act[top + i]
            delta[top + i] = (a - Y[s, i]) * a * (1.0 - a)
        for l in range(n_layers - 1, -1, -1):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            # propagate before this layer's weights change
            if l > 0:
                for j in range(n_in):
                    acc = 0.0
                    for i in range(n_out):
                        acc += params[w_off[l] + i * n_in + j] * delta[a_off[l + 1] + i]
                    a = act[a_off[l] + j]
                    delta[a_off[l] + j] = acc * a * (1.0 - a)
            for i in range(n_out):
                g = delta[a_off[l + 1] + i]
                for j in range(n_in):
                    params[w_off[l] + i * n_in + j] -= lr * g * act[a_off[l] + j]
                params[b_off[l] + i] -= lr * g


def sgd_epoch(net: MlpNetwork, X: np.ndarray, Y: np.ndarray, order: np.ndarray, lr: float) -> None:
    """In-place pass of per-sample updates over ``X[order]``."""
    sizes, w_off, b_off, a_off = _layout(net.layer_sizes)
    params = net.parameters()
    _sgd_epoch(params, sizes, w_off, b_off, a_off,
               np.ascontiguousarray(X, dtype=np.float64),
               np.ascontiguousarray(Y, dtype=np.float64),
               np.asarray(order, dtype=np.int64), float(lr))
    net.set_parameters(params)


# -- training -------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_epochs: int = 1000
    patience: int = 6
    seed: int = 0
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if len(self.split) != 3 or any(f <= 0 for f in self.split):
            raise ConfigError(f"split fractions must be three positive numbers, got {self.split}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(self.split)}")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64)
        self.y = y[:, None] if y.ndim == 1 else y
        if self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(f"{self.X.shape[0]} samples but {self.y.shape[0]} targets")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


def split_indices(n: int, split, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle cut into train / validation / test index arrays."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(math.floor(n * split[0] + 0.5))
    n_val = int(math.floor(n * split[1] + 0.5))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise EmptyDataset(f"{n} samples cannot fill a {tuple(split)} split")
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float


class EarlyStopping:
    """Tracks the best validation score and signals when patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.best_state = None
        self.wait = 0

    def update(self, epoch: int, val_mse: float, state) -> bool:
        if val_mse < self.best:
            self.best = val_mse
            self.best_epoch = epoch
            self.best_state = state
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


@dataclass
class TrainResult:
    net: MlpNetwork
    history: list[EpochRecord]
    best_epoch: int
    stopped_epoch: int
    splits: dict[str, Dataset] = field(repr=False)

    def __iter__(self):
        # allows ``net, history = train(...)``
        return iter((self.net, self.history))

    def history_csv(self) -> str:
        lines = ["epoch,train_mse,val_mse"]
        lines += [f"{r.epoch},{r.train_mse!r},{r.val_mse!r}" for r in self.history]
        return "\n".join(lines) + "\n"


def dataset_mse(net: MlpNetwork, data: Dataset) -> float:
    d = predict(net, data.X) - data.y
    return float(np.mean(0.5 * np.sum(d * d, axis=1)))


def train(net: MlpNetwork, dataset, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Per-sample SGD with validation early stopping.

    ``dataset`` is a :class:`Dataset` or an ``(X, y)`` pair. The input
    network is left untouched; the returned network carries the parameters
    of the epoch with the lowest validation MSE.
    """
    data = dataset if isinstance(dataset, Dataset) else Dataset(*dataset)
    if len(data) == 0:
        raise EmptyDataset("dataset is empty")
    if data.X.shape[1] != net.n_inputs or data.y.shape[1] != net.n_outputs:
        raise DimensionMismatch(
            f"dataset is {data.X.shape[1]} -> {data.y.shape[1]}, "
            f"network is {net.n_inputs} -> {net.n_outputs}"
        )
    tr_idx, va_idx, te_idx = split_indices(len(data), cfg.split, cfg.seed)
    splits = {
        "training": data.subset(tr_idx),
        "validation": data.subset(va_idx),
        "test": data.subset(te_idx),
    }
    train_set, val_set = splits["training"], splits["validation"]

    rng = np.random.default_rng([cfg.seed, 1])
    work = net.copy()
    stopper = EarlyStopping(cfg.patience)
    history = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        sgd_epoch(work, train_set.X, train_set.y, order, cfg.learning_rate)
        rec = EpochRecord(epoch, dataset_mse(work, train_set), dataset_mse(work, val_set))
        history.append(rec)
        if not np.isfinite(rec.val_mse):
            break
        if stopper.update(epoch, rec.val_mse, work.parameters()):
            break

    if stopper.best_state is None:
        raise NumericError("validation MSE was never finite; lower the learning rate")
    best = net.copy()
    best.set_parameters(stopper.best_state)
    return TrainResult(best, history, stopper.best_epoch, epoch, splits)


# -- evaluation -----------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    set_name: str
    accuracy: float
    mse: float
    error_rate: float

    def to_dict(self) -> dict:
        return {
            "set_name": self.set_name,
            "accuracy": self.accuracy,
            "mse": self.mse,
            "error_rate": self.error_rate,
        }


def evaluate(net: MlpNetwork, samples, cutoff: float = 0.5, set_name: str = "test") -> EvalReport:
    """Accuracy (output > cutoff vs target class), mean sample loss and error rate."""
    data = samples if isinstance(samples, Dataset) else Dataset(*samples)
    if len(data) == 0:
        raise EmptySet(f"{set_name} set is empty")
    if not 0.0 < cutoff < 1.0:
        raise ConfigError("cutoff must lie in (0, 1)")
    out = predict(net, data.X)
    predicted = out > cutoff
    actual = data.y >= 0.5
    correct = np.all(predicted == actual, axis=1)
    accuracy = float(np.mean(correct))
    d = out - data.y
    mse = float(np.mean(0.5 * np.sum(d * d, axis=1)))
    return EvalReport(set_name, accuracy, mse, 1.0 - accuracy)


_GRID_ROWS = (("Accuracy", "accuracy"), ("MSE", "mse"), ("Error", "error_rate"))
_GRID_COLS = {"training": "Training Set", "validation": "Validation Set", "test": "Test Data"}


def report_grid(reports: Sequence[EvalReport]) -> dict:
    """Statistic x set layout: ``{"Accuracy": {"Training Set": ..., ...}, ...}``."""
    return {
        row: {_GRID_COLS.get(r.set_name, r.set_name): getattr(r, attr) for r in reports}
        for row, attr in _GRID_ROWS
    }


def format_grid(reports: Sequence[EvalReport]) -> str:
    cols = [_GRID_COLS.get(r.set_name, r.set_name) for r in reports]
    lines = ["\t".join(["Statistics", *cols])]
    for row, attr in _GRID_ROWS:
        cells = []
        for r in reports:
            v = getattr(r, attr)
            cells.append(f"{v:.3f}" if attr == "mse" else f"{100 * v:.2f}%")
        lines.append("\t".join([row, *cells]))
    return "\n".join(lines)
