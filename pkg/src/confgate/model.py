"""Desk-scale softmax classifiers and temperature-scaling calibration."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "confgate-mlp"
CHECKPOINT_VERSION = 1


@dataclass
class MlpClassifier:
    """Fully connected ReLU network producing ``n`` logits.

    ``weights[i]`` has shape ``(sizes[i], sizes[i+1])``; inputs of any shape
    are flattened before the first layer.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_shape: tuple[int, ...] | None = None

    @classmethod
    def init(cls, sizes: list[int], rng: np.random.Generator,
             input_shape: tuple[int, ...] | None = None) -> "MlpClassifier":
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        weights = [rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes, sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(weights, biases, input_shape)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MlpClassifier":
        return MlpClassifier([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                             self.input_shape)

    def _flatten(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        d = self.weights[0].shape[0]
        if x.size == d:
            return x.reshape(d)
        raise ValueError(f"input of size {x.size} does not match model input size {d}")

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Logits for a single input."""
        return self.logits_batch(self._flatten(x)[None])[0]

    def logits_batch(self, X: np.ndarray) -> np.ndarray:
        h = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        d = self.weights[0].shape[0]
        if h.shape[1] != d:
            raise ValueError(f"batch of width {h.shape[1]} does not match input size {d}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]


def forward(model: MlpClassifier, x: np.ndarray) -> np.ndarray:
    return model.logits(x)


@dataclass(frozen=True)
class TemperatureScaler:
    T: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"temperature must be positive, got {self.T}")


def softmax(logits: np.ndarray, scaler: TemperatureScaler | float = TemperatureScaler()) -> np.ndarray:
    """Softmax of ``logits / T`` along the last axis."""
    T = scaler.T if isinstance(scaler, TemperatureScaler) else float(scaler)
    if not T > 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("non-finite logits")
    z = z / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    return float(-np.mean(np.log(probs[np.arange(len(labels)), labels])))


def loss_and_grads(model: MlpClassifier, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over ``(X, y)`` and its gradients (backprop)."""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    acts = [X]
    pre = []
    h = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    p = softmax(h)
    n = len(y)
    loss = float(-np.mean(np.log(p[np.arange(n), y] + 1e-300)))
    delta = p.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw, gb = [], []
    for i in range(last, -1, -1):
        gw.append(acts[i].T @ delta)
        gb.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return loss, gw[::-1], gb[::-1]


def train(model: MlpClassifier, X: np.ndarray, y: np.ndarray, epochs: int, lr: float,
          rng: np.random.Generator, batch_size: int = 32) -> tuple[MlpClassifier, list[float]]:
    """Plain mini-batch SGD on cross-entropy.

    Returns the trained copy and the full-dataset loss before training and after each epoch.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty dataset")
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError("labels out of range")
    model = model.copy()
    history = [loss_and_grads(model, X, y)[0]]
    for _ in range(epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            idx = order[start:start + batch_size]
            _, gw, gb = loss_and_grads(model, X[idx], y[idx])
            for w, g in zip(model.weights, gw):
                w -= lr * g
            for b, g in zip(model.biases, gb):
                b -= lr * g
        history.append(loss_and_grads(model, X, y)[0])
    return model, history


def accuracy(model: MlpClassifier, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.argmax(model.logits_batch(X), axis=1) == np.asarray(y)))


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationConfig:
    n_bins: int = 15
    t_min: float = 0.05
    t_max: float = 20.0
    iterations: int = 60
    grid_points: int = 41

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError("need at least one bin")
        if not 0 < self.t_min < self.t_max:
            raise ValueError("require 0 < t_min < t_max")


def bin_index(conf: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-width bins ``((m-1)/M, m/M]``; confidence 0 lands in the first bin."""
    idx = np.ceil(np.asarray(conf) * n_bins).astype(np.int64) - 1
    return np.clip(idx, 0, n_bins - 1)


def ece_from_probs(probs: np.ndarray, labels: np.ndarray, n_bins: int = 15) -> float:
    """Expected calibration error of predicted probability rows against labels."""
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels)
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    idx = bin_index(conf, n_bins)
    n = len(labels)
    counts = np.bincount(idx, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    # |B|/n * |acc - conf| == |sum(correct) - sum(conf)| / n
    return float(np.sum(np.abs(acc_sum - conf_sum)[counts > 0]) / n)


def expected_calibration_error(logits: np.ndarray, labels: np.ndarray,
                               scaler: TemperatureScaler = TemperatureScaler(),
                               cfg: CalibrationConfig = CalibrationConfig()) -> float:
    logits = np.atleast_2d(logits)
    if len(logits) == 0:
        raise ValueError("empty dataset")
    return ece_from_probs(softmax(logits, scaler), labels, cfg.n_bins)


def calibrate(logits: np.ndarray, labels: np.ndarray,
              cfg: CalibrationConfig = CalibrationConfig()) -> TemperatureScaler:
    """Temperature minimising ECE on ``(logits, labels)``.

    A log-spaced scan over ``[t_min, t_max]`` (which always contains ``T = 1``)
    seeds a golden-section search on ``log T`` around the best scan point. The
    best temperature evaluated anywhere is returned, so the result never does
    worse than ``T = 1``.
    """
    logits = np.atleast_2d(logits)
    if len(logits) == 0:
        raise ValueError("empty dataset")

    def ece_at(log_t: float) -> float:
        return ece_from_probs(softmax(logits, math.exp(log_t)), labels, cfg.n_bins)

    lo, hi = math.log(cfg.t_min), math.log(cfg.t_max)
    grid = sorted(set(np.linspace(lo, hi, cfg.grid_points).tolist()) | {0.0})
    seen = {g: ece_at(g) for g in grid}
    best = min(grid, key=lambda g: (seen[g], abs(g)))
    i = grid.index(best)
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]

    inv_phi = (math.sqrt(5) - 1) / 2
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = ece_at(c), ece_at(d)
    seen[c], seen[d] = fc, fd
    for _ in range(cfg.iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = seen[c] = ece_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = seen[d] = ece_at(d)
    best = min(seen, key=lambda g: (seen[g], abs(g)))
    return TemperatureScaler(math.exp(best))


def confidence_histogram(logits: np.ndarray, labels: np.ndarray,
                         scaler: TemperatureScaler = TemperatureScaler(), bins: int = 10):
    """Distribution of calibrated confidence over correctly classified samples.

    Returns ``(edges, fractions, cumulative)`` where ``fractions`` sums to one.
    """
    probs = softmax(np.atleast_2d(logits), scaler)
    correct = probs.argmax(axis=1) == np.asarray(labels)
    if not correct.any():
        raise ValueError("no correctly classified samples")
    conf = probs.max(axis=1)[correct]
    counts = np.bincount(bin_index(conf, bins), minlength=bins).astype(np.float64)
    fractions = counts / counts.sum()
    return np.linspace(0.0, 1.0, bins + 1), fractions, np.cumsum(fractions)


# ---------------------------------------------------------------------------
# checkpoints: JSON header + flat f32 blob


def save_checkpoint(path: str | Path, model: MlpClassifier,
                    scaler: TemperatureScaler = TemperatureScaler()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = np.concatenate([a.ravel() for pair in zip(model.weights, model.biases) for a in pair])
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": model.sizes,
        "n_classes": model.n_classes,
        "temperature": scaler.T,
        "input_shape": list(model.input_shape) if model.input_shape else None,
        "dtype": "f32",
        "count": int(flat.size),
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    path.with_suffix(".f32").write_bytes(flat.astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[MlpClassifier, TemperatureScaler]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    flat = np.frombuffer(path.with_suffix(".f32").read_bytes(), dtype="<f4").astype(np.float64)
    if flat.size != header["count"]:
        raise ValueError(f"{path}: expected {header['count']} weights, found {flat.size}")
    sizes = header["layer_sizes"]
    weights, biases, pos = [], [], 0
    for a, b in zip(sizes, sizes[1:]):
        weights.append(flat[pos:pos + a * b].reshape(a, b))
        pos += a * b
        biases.append(flat[pos:pos + b].copy())
        pos += b
    shape = tuple(header["input_shape"]) if header.get("input_shape") else None
    return MlpClassifier(weights, biases, shape), TemperatureScaler(header["temperature"])
