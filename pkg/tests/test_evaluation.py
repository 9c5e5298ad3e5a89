import numpy as np
import pytest
from hypothesis import given, strategies as st

from confgate.core import RngStream
from confgate.defense import DefenseParam, GateConfig, GatedClassifier
from confgate.evaluation import (ExperimentPoint, adv_objective, compute_asr, compute_ca, dominates,
                                 format_point, frontier_indices, is_successful, pareto_frontier)


def P(ca, ra, **kw):
    return ExperimentPoint(ca, ra, **kw)


def brute_frontier(points):
    return [i for i, p in enumerate(points)
            if not any(q.ca >= p.ca and q.ra >= p.ra and (q.ca > p.ca or q.ra > p.ra) for q in points)]


def test_adv_objective():
    assert abs(adv_objective(np.array([0.7, 0.3]), 0) + 0.4) < 1e-12
    assert abs(adv_objective(np.array([0.3, 0.7]), 0) - 0.4) < 1e-12
    assert adv_objective(np.full(4, 0.25), 2) == 0.0
    with pytest.raises(ValueError):
        adv_objective(np.array([1.0]), 0)


class _Fixed:
    def __init__(self, label):
        self.label = label

    def probs(self, x, rng=None):
        return np.eye(3)[self.label]


def test_is_successful():
    x0 = np.zeros(4)
    eps = 1.0
    assert not is_successful(x0, x0, 0, _Fixed(0), eps)
    far = np.array([eps + 0.001, 0, 0, 0])
    assert not is_successful(far, x0, 0, _Fixed(1), eps)
    near = np.array([0.9 * eps, 0, 0, 0])
    assert is_successful(near, x0, 0, _Fixed(1), eps)
    # monotone in epsilon
    assert is_successful(near, x0, 0, _Fixed(1), 2 * eps)
    assert not is_successful(None, x0, 0, _Fixed(1), eps)


def test_compute_asr():
    asr, ra = compute_asr([True] * 21 + [False] * 79)
    assert asr == 0.21 and ra == 0.79
    assert compute_asr([False] * 7) == (0.0, 1.0)
    with pytest.raises(ValueError):
        compute_asr([])


@given(st.lists(st.booleans(), min_size=1, max_size=300))
def test_ra_plus_asr_is_one(flags):
    asr, ra = compute_asr(flags)
    assert ra == (len(flags) - sum(flags)) / len(flags)
    ExperimentPoint(0.5, ra, asr)


def test_compute_ca_examples(blob_model, blob_splits):
    X = np.zeros((10, 2))
    y = np.arange(10) % 2
    assert compute_ca(_Fixed(0), X, y) == 0.5
    test = blob_splits["test"]

    class Truth:
        def probs(self, x, rng=None):
            i = int(np.flatnonzero((test.X == x).all(axis=1))[0])
            return np.eye(3)[test.y[i]]

    assert compute_ca(Truth(), test.X, test.y) == 1.0
    model, scaler = blob_model
    plain = compute_ca(GatedClassifier(model, scaler), test.X, test.y)
    for nu in (0.05, 0.2, 0.5):
        g = GatedClassifier(model, scaler, DefenseParam("RND", nu), GateConfig(0.0))
        assert compute_ca(g, test.X, test.y, RngStream(4)) == plain


def test_dominates_examples():
    assert dominates(P(0.94, 0.59), P(0.93, 0.51))
    assert dominates(P(0.5, 0.5), P(0.5, 0.5))
    assert not dominates(P(0.95, 0.47), P(0.82, 0.71))
    assert not dominates(P(0.82, 0.71), P(0.95, 0.47))


def test_frontier_examples():
    pts = [P(0.95, 0.47), P(0.82, 0.71), P(0.80, 0.50)]
    assert pareto_frontier(pts) == [pts[0], pts[1]]
    assert pareto_frontier([P(0.3, 0.3)]) == [P(0.3, 0.3)]
    # duplicates are all kept
    dup = [P(0.9, 0.6), P(0.9, 0.6), P(0.8, 0.5)]
    assert frontier_indices(dup) == [0, 1]


coords = st.floats(0, 1).map(lambda v: round(v, 2))


@given(st.lists(st.tuples(coords, coords), max_size=200))
def test_frontier_matches_brute_force(pairs):
    pts = [P(a, b) for a, b in pairs]
    assert sorted(frontier_indices(pts)) == brute_frontier(pts)
    cas = [pts[i].ca for i in frontier_indices(pts)]
    assert cas == sorted(cas, reverse=True)


def test_frontier_large_random():
    rng = np.random.default_rng(0)
    pts = [P(a, b) for a, b in np.round(rng.random((1000, 2)), 2)]
    assert sorted(frontier_indices(pts)) == brute_frontier(pts)


def test_point_invariants_and_format():
    with pytest.raises(ValueError):
        ExperimentPoint(0.5, 0.7, asr=0.4)
    with pytest.raises(ValueError):
        ExperimentPoint(1.2, 0.5)
    assert format_point(P(0.82, 0.71)) == "CA 0.82 / RA 0.71"
