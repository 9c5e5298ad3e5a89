"""Success predicates, CA/RA metrics and Pareto analysis over (nu, tau) cells."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import RngStream, argmax, distance, fork_rng


def adv_objective(probs: np.ndarray, source: int) -> float:
    """Untargeted margin ``max_{i != s} f_i - f_s``; positive iff misclassified."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("need a probability vector over at least two classes")
    if not 0 <= source < p.size:
        raise ValueError(f"source label {source} out of range")
    return float(np.max(np.delete(p, source)) - p[source])


def is_successful(x_adv: np.ndarray | None, x0: np.ndarray, source: int, classifier,
                  epsilon: float, rng: np.random.Generator | None = None) -> bool:
    """Misclassified by the evaluation classifier and within ``epsilon`` (inclusive)."""
    if x_adv is None:
        return False
    if distance(x_adv, x0) > epsilon:
        return False
    return argmax(classifier.probs(x_adv, rng)) != source


def compute_asr(outcomes: Sequence[bool]) -> tuple[float, float]:
    """``(ASR, RA)`` from per-sample success flags; RA is ``(n - succ) / n`` exactly."""
    n = len(outcomes)
    if n == 0:
        raise ValueError("no attack outcomes")
    succ = sum(bool(o) for o in outcomes)
    asr = Fraction(succ, n)
    return float(asr), float(1 - asr)


def compute_ca(classifier, X: np.ndarray, y: np.ndarray, stream: RngStream | None = None) -> float:
    """Accuracy of ``classifier.probs`` on ``(X, y)``.

    Sample ``i`` draws defense randomness from ``fork_rng(stream, i)``, so the
    result does not depend on evaluation order.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    if len(X) == 0:
        raise ValueError("empty evaluation set")
    stream = stream or RngStream(0)
    hits = 0
    for i, (x, label) in enumerate(zip(X, y)):
        rng = fork_rng(stream, i).generator()
        hits += argmax(classifier.probs(x, rng)) == int(label)
    return hits / len(X)


@dataclass(frozen=True)
class ExperimentPoint:
    ca: float
    ra: float
    asr: float | None = None
    defense: str = "NONE"
    nu: float = 0.0
    tau: float = 0.0
    attack: str = ""
    mean_queries: float = 0.0
    n: int = 0

    def __post_init__(self):
        if not (0.0 <= self.ca <= 1.0 and 0.0 <= self.ra <= 1.0):
            raise ValueError("CA and RA must lie in [0, 1]")
        if self.asr is not None and abs(self.ra - (1.0 - self.asr)) > 1e-12:
            raise ValueError("RA must equal 1 - ASR")

    def to_dict(self) -> dict:
        return asdict(self)


def dominates(a: ExperimentPoint, b: ExperimentPoint) -> bool:
    """Weak domination: at least as good in both CA and RA (reflexive)."""
    return a.ca >= b.ca and a.ra >= b.ra


def strictly_dominates(a: ExperimentPoint, b: ExperimentPoint) -> bool:
    return dominates(a, b) and (a.ca > b.ca or a.ra > b.ra)


def frontier_indices(points: Sequence[ExperimentPoint]) -> list[int]:
    """Indices of points no other point strictly dominates, by CA then RA descending.

    Sort-and-sweep: after ordering by (CA desc, RA desc), a point survives iff
    its RA beats every earlier point with strictly larger CA and matches the
    best RA among points sharing its CA.
    """
    order = sorted(range(len(points)), key=lambda i: (-points[i].ca, -points[i].ra, i))
    keep = []
    best_ra_above = -np.inf  # best RA among strictly larger CA
    j = 0
    while j < len(order):
        ca = points[order[j]].ca
        group = []
        while j < len(order) and points[order[j]].ca == ca:
            group.append(order[j])
            j += 1
        top = points[group[0]].ra
        if top > best_ra_above:
            keep.extend(i for i in group if points[i].ra == top)
        best_ra_above = max(best_ra_above, top)
    return keep


def pareto_frontier(points: Sequence[ExperimentPoint]) -> list[ExperimentPoint]:
    return [points[i] for i in frontier_indices(points)]


def format_point(p: ExperimentPoint) -> str:
    return f"CA {p.ca:.2f} / RA {p.ra:.2f}"
