"""Analytic classifiers with known minimal adversarial distortion."""
from __future__ import annotations

import numpy as np

from .model import softmax


class LinearOracle:
    """Two classes split by the hyperplane ``w . x + b = 0``; class 1 on the positive side."""

    randomized = False

    def __init__(self, w: np.ndarray, b: float, mode: str = "decision", sharpness: float = 50.0):
        w = np.asarray(w, dtype=np.float64)
        self.w = w / np.linalg.norm(w)
        self.b = float(b) / np.linalg.norm(w)
        self.mode = mode
        self.sharpness = sharpness

    def margin(self, x: np.ndarray) -> float:
        return float(np.dot(self.w, np.ravel(x)) + self.b)

    def probs(self, x, rng=None):
        m = self.margin(x)
        return softmax(np.array([-m, m]) * self.sharpness)

    def projection(self, x: np.ndarray) -> np.ndarray:
        return np.ravel(x) - self.margin(x) * self.w

    def min_distortion(self, x: np.ndarray) -> float:
        return abs(self.margin(x))


class SphereOracle:
    """Class 0 strictly inside the l2 ball of ``radius`` around ``center``; class 1 outside."""

    randomized = False

    def __init__(self, center: np.ndarray, radius: float, mode: str = "decision"):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.mode = mode

    def probs(self, x, rng=None):
        r = float(np.linalg.norm(np.ravel(x) - np.ravel(self.center)))
        return np.array([1.0, 0.0]) if r < self.radius else np.array([0.0, 1.0])


class ConstantOracle:
    """Always predicts ``label``."""

    randomized = False

    def __init__(self, label: int = 0, n_classes: int = 2, mode: str = "decision"):
        self.label = label
        self.n_classes = n_classes
        self.mode = mode

    def probs(self, x, rng=None):
        p = np.zeros(self.n_classes)
        p[self.label] = 1.0
        return p
