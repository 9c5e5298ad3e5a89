"""Synthetic Gaussian-blob datasets and their on-disk tensor layout."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream, clamp, fork_rng, load_tensor, save_tensor

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    X: np.ndarray  # (n, *shape)
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.X.shape[1:])


def class_means(n_classes: int, d: int, radius: float) -> np.ndarray:
    """Class ``c`` sits at ``0.5 +- radius`` along axis ``c mod d`` (sign flips once ``c >= d``)."""
    if n_classes > 2 * d:
        raise ValueError(f"at most 2*d = {2 * d} classes fit on the axes, got {n_classes}")
    means = np.full((n_classes, d), 0.5)
    for c in range(n_classes):
        means[c, c % d] += radius if c < d else -radius
    return means


def generate_blobs(n_classes: int, d: int, per_class: int, spread: float,
                   rng: np.random.Generator, radius: float = 0.25,
                   shape: tuple[int, ...] | None = None) -> Dataset:
    """Isotropic Gaussian clusters around :func:`class_means`, clamped to ``[0, 1]``.

    Samples are ordered by class. ``shape`` reshapes each flat sample (e.g. to
    ``(1, 8, 8)`` for image defenses).
    """
    if n_classes < 2 or d < 2:
        raise ValueError("need at least two classes and two dimensions")
    if not spread > 0:
        raise ValueError("spread must be positive")
    means = class_means(n_classes, d, radius)
    X = np.concatenate([clamp(m + spread * rng.standard_normal((per_class, d))) for m in means])
    y = np.repeat(np.arange(n_classes), per_class)
    if shape is not None:
        if int(np.prod(shape)) != d:
            raise ValueError(f"shape {shape} does not hold {d} values")
        X = X.reshape((len(X), *shape))
    return Dataset(X, y)


def generate_splits(n_classes: int, d: int, per_class: dict[str, int], spread: float,
                    stream: RngStream, radius: float = 0.25,
                    shape: tuple[int, ...] | None = None) -> dict[str, Dataset]:
    """Independent train/val/test draws, each from its own forked stream."""
    return {name: generate_blobs(n_classes, d, per_class[name], spread,
                                 fork_rng(stream, i).generator(), radius, shape)
            for i, name in enumerate(SPLITS)}


def mean_distance_scale(data: Dataset) -> float:
    """Median distance between empirical class means."""
    X = data.X.reshape(len(data), -1)
    means = np.stack([X[data.y == c].mean(axis=0) for c in np.unique(data.y)])
    i, j = np.triu_indices(len(means), k=1)
    return float(np.median(np.linalg.norm(means[i] - means[j], axis=1)))


def save_dataset(directory: str | Path, splits: dict[str, Dataset]) -> None:
    """``<split>_x.{f32,json}`` tensors plus ``<split>_y.json`` label lists."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, ds in splits.items():
        save_tensor(directory / f"{name}_x", ds.X, count=len(ds))
        (directory / f"{name}_y.json").write_text(json.dumps([int(v) for v in ds.y]) + "\n")


def load_dataset(directory: str | Path) -> dict[str, Dataset]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    out = {}
    for name in SPLITS:
        if not (directory / f"{name}_x.json").exists():
            continue
        X = load_tensor(directory / f"{name}_x")
        y = np.array(json.loads((directory / f"{name}_y.json").read_text()), dtype=np.int64)
        if len(X) != len(y):
            raise ValueError(f"{name}: {len(X)} inputs but {len(y)} labels")
        out[name] = Dataset(X, y)
    if "train" not in out or "test" not in out:
        raise FileNotFoundError(f"{directory} needs at least train and test splits")
    return out
