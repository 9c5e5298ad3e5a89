"""Two-class sigmoid model of class probabilities along a segment ``[x_t, x_0]``.

Position ``k = 0`` is the adversarial endpoint ``x_t`` (class ``c_t``, index 0)
and ``k = 1`` is the genuine sample ``x_0`` (class ``c_0``, index 1)::

    p_ct(k) = eta + (1 - 2 eta) * sigma(-s0 (k - z0))     decreasing in k
    p_c0(k) = eta + (1 - 2 eta) * sigma( s1 (k - z1))     increasing in k
    sigma(u) = 1 / (1 + exp(-4 u))

Both raw curves meet at ``k* = (s0 z0 + s1 z1) / (s0 + s1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CT, C0 = 0, 1


def sigma(u):
    """Logistic curve with slope 1 at the origin."""
    return 1.0 / (1.0 + np.exp(-4.0 * np.asarray(u, dtype=np.float64)))


@dataclass(frozen=True)
class SegmentModel:
    eta: float
    s0: float
    s1: float
    z0: float
    z1: float
    x_t: np.ndarray | None = None
    x_0: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta < 0.5:
            raise ValueError("eta must lie in [0, 1/2)")
        if not (self.s0 > 0 and self.s1 > 0):
            raise ValueError("inverse scales must be positive")

    def raw(self, k: float) -> tuple[float, float]:
        """Un-normalised ``(p_ct(k), p_c0(k))``."""
        span = 1.0 - 2.0 * self.eta
        p_t = self.eta + span * float(sigma(-self.s0 * (k - self.z0)))
        p_0 = self.eta + span * float(sigma(self.s1 * (k - self.z1)))
        return p_t, p_0


def segment_probs(m: SegmentModel, k: float) -> np.ndarray:
    """Normalised two-class probability vector ``(p_ct, p_c0)`` at position ``k``."""
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"k={k} outside [0, 1]")
    p_t, p_0 = m.raw(k)
    total = p_t + p_0
    return np.array([p_t / total, p_0 / total])


def crossing_point(m: SegmentModel) -> float:
    """Position where both raw class curves are equal.

    Lies in ``[0, 1]`` whenever both centres do, being a convex combination of them.
    """
    return (m.s0 * m.z0 + m.s1 * m.z1) / (m.s0 + m.s1)


class SegmentOracle:
    """Classifier whose output along ``[x_t, x_0]`` follows a :class:`SegmentModel`.

    Queries are projected onto the segment. With ``sample=True`` the returned
    vector is one-hot on a label drawn from the model probabilities, i.e. a
    randomized classifier whose per-query success rate is the sigmoid curve.
    """

    def __init__(self, model: SegmentModel, sample: bool = False, mode: str = "decision"):
        if model.x_t is None or model.x_0 is None:
            raise ValueError("segment oracle needs both endpoints")
        self.model = model
        self.sample = sample
        self.mode = mode
        self.randomized = sample
        self._x_t = np.asarray(model.x_t, dtype=np.float64)
        self._dir = np.asarray(model.x_0, dtype=np.float64) - self._x_t
        self._len2 = float(np.sum(self._dir ** 2))

    def position(self, x: np.ndarray) -> float:
        k = float(np.sum((np.asarray(x) - self._x_t) * self._dir) / self._len2)
        return min(max(k, 0.0), 1.0)

    def true_probs(self, x: np.ndarray) -> np.ndarray:
        return segment_probs(self.model, self.position(x))

    def probs(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        p = self.true_probs(x)
        if not self.sample:
            return p
        if rng is None:
            raise ValueError("randomized oracle needs an rng")
        out = np.zeros(2)
        out[CT if rng.random() < p[CT] else C0] = 1.0
        return out
