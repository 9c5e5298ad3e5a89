import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from confgate.data import generate_blobs
from confgate.model import (CalibrationConfig, MlpClassifier, TemperatureScaler, calibrate,
                            confidence_histogram, cross_entropy, ece_from_probs,
                            expected_calibration_error, forward, load_checkpoint, loss_and_grads,
                            save_checkpoint, softmax, train)


def test_zero_weights_give_zero_logits():
    m = MlpClassifier([np.zeros((4, 5)), np.zeros((5, 3))], [np.zeros(5), np.zeros(3)])
    assert np.array_equal(forward(m, np.random.default_rng(0).random(4)), np.zeros(3))


def test_single_layer_one_hot_picks_weight_row():
    w = np.random.default_rng(1).normal(size=(4, 3))
    m = MlpClassifier([w], [np.zeros(3)])
    x = np.zeros(4)
    x[2] = 1.0
    assert np.allclose(forward(m, x), w[2])


def test_forward_deterministic_and_shape_checked():
    m = MlpClassifier.init([6, 8, 3], np.random.default_rng(2))
    x = np.random.default_rng(3).random(6)
    assert np.array_equal(forward(m, x), forward(m, x))
    with pytest.raises(ValueError):
        forward(m, np.zeros(5))


def test_softmax_examples():
    assert np.allclose(softmax(np.array([math.log(2), 0.0])), [2 / 3, 1 / 3])
    z = np.random.default_rng(0).normal(size=7) * 5
    assert np.allclose(softmax(z, TemperatureScaler(1e6)), np.full(7, 1 / 7), atol=1e-5)
    with pytest.raises(ValueError):
        softmax(np.array([1.0, np.nan]))


@given(arrays(np.float64, 5, elements=st.floats(-30, 30)), st.sampled_from([0.1, 1.0, 10.0]))
def test_temperature_keeps_argmax(z, T):
    p = softmax(z, TemperatureScaler(T))
    assert abs(p.sum() - 1) < 1e-9
    top2 = np.sort(z)[-2:]
    if top2[1] - top2[0] > 1e-9:
        assert np.argmax(p) == np.argmax(z)


def test_uniform_cross_entropy_is_log_n():
    assert abs(cross_entropy(np.full((3, 4), 0.25), np.array([0, 1, 3])) - math.log(4)) < 1e-12


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    m = MlpClassifier.init([2, 8, 3], rng)
    for b in m.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    X = rng.normal(size=(10, 2))
    y = rng.integers(0, 3, size=10)
    _, gw, gb = loss_and_grads(m, X, y)
    h = 1e-4
    for params, grads in ((m.weights, gw), (m.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_and_grads(m, X, y)[0]
                p[idx] = old - h
                down = loss_and_grads(m, X, y)[0]
                p[idx] = old
                num = (up - down) / (2 * h)
                assert abs(num - g[idx]) <= 1e-4 * max(1.0, abs(num), abs(g[idx]))


def test_training_separable_blobs():
    rng = np.random.default_rng(5)
    data = generate_blobs(2, 2, 250, 0.05, rng)
    m = MlpClassifier.init([2, 16, 2], rng)
    m, hist = train(m, data.X, data.y, epochs=30, lr=0.3, rng=rng)
    assert hist[-1] <= hist[0]
    acc = np.mean(np.argmax(m.logits_batch(data.X), axis=1) == data.y)
    assert acc >= 0.99


def test_training_to_interpolation():
    rng = np.random.default_rng(6)
    m = MlpClassifier.init([4, 16, 3], rng)
    x = rng.random((1, 4))
    m, _ = train(m, x, np.array([2]), epochs=300, lr=0.5, rng=rng)
    assert softmax(m.logits(x[0]))[2] > 0.99


def test_train_rejects_bad_inputs():
    m = MlpClassifier.init([2, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        train(m, np.zeros((0, 2)), np.zeros(0, dtype=int), 1, 0.1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        train(m, np.zeros((2, 2)), np.array([0, 1]), 1, 0.0, np.random.default_rng(0))


def test_ece_examples():
    probs = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert ece_from_probs(probs, np.array([0, 1])) == 0.0
    # one bin: accuracy 0.5, confidence 0.9
    probs = np.array([[0.9, 0.1], [0.9, 0.1]])
    assert abs(ece_from_probs(probs, np.array([0, 1]), n_bins=1) - 0.4) < 1e-12


def test_ece_matches_per_sample_accumulation():
    rng = np.random.default_rng(7)
    logits = rng.normal(size=(300, 4)) * 3
    labels = rng.integers(0, 4, size=300)
    M = 15
    p = softmax(logits)
    sums = {}
    for row, lab in zip(p, labels):
        c = row.max()
        m = min(max(math.ceil(c * M) - 1, 0), M - 1)
        n, acc, conf = sums.get(m, (0, 0.0, 0.0))
        sums[m] = (n + 1, acc + (np.argmax(row) == lab), conf + c)
    ref = sum(n / len(p) * abs(a / n - c / n) for n, a, c in sums.values())
    assert abs(expected_calibration_error(logits, labels) - ref) <= 1e-12


def _overconfident(seed, n=4000, k=5):
    rng = np.random.default_rng(seed)
    true_logits = rng.normal(size=(n, k)) * 2.0
    labels = np.array([rng.choice(k, p=row) for row in softmax(true_logits)])
    return true_logits, labels


def test_calibrate_overconfident_model():
    true_logits, labels = _overconfident(8)
    logits = 3.0 * true_logits
    scaler = calibrate(logits, labels)
    assert 2.0 <= scaler.T <= 4.5
    # dense scan oracle
    grid = np.exp(np.linspace(math.log(0.05), math.log(20), 2000))
    dense = min(expected_calibration_error(logits, labels, TemperatureScaler(t)) for t in grid)
    got = expected_calibration_error(logits, labels, scaler)
    assert got <= dense + 2e-3
    assert got < expected_calibration_error(logits, labels)
    assert np.array_equal(np.argmax(softmax(logits, scaler), 1), np.argmax(logits, 1))


def test_calibrate_never_worse_than_identity():
    true_logits, labels = _overconfident(9, n=1500)
    s = calibrate(true_logits, labels)
    assert expected_calibration_error(true_logits, labels, s) <= expected_calibration_error(true_logits, labels)


def test_calibration_config_validation():
    with pytest.raises(ValueError):
        CalibrationConfig(n_bins=0)
    with pytest.raises(ValueError):
        CalibrationConfig(t_min=2, t_max=1)


def test_confidence_histogram():
    logits = np.array([[50.0, 0.0], [0.0, 50.0]])
    _, frac, cum = confidence_histogram(logits, np.array([0, 1]), bins=10)
    assert frac[-1] == 1.0 and frac[:-1].sum() == 0.0
    rng = np.random.default_rng(10)
    logits = rng.normal(size=(200, 3)) * 2
    _, frac, cum = confidence_histogram(logits, rng.integers(0, 3, 200))
    assert abs(frac.sum() - 1) <= 1e-12
    assert np.all(np.diff(cum) >= 0)


def test_trained_blob_model_is_confident(blob_model, blob_splits):
    model, scaler = blob_model
    test = blob_splits["test"]
    _, frac, _ = confidence_histogram(model.logits_batch(test.X), test.y, scaler, bins=10)
    assert frac[-1] >= 0.8


def test_checkpoint_roundtrip(tmp_path):
    m = MlpClassifier.init([5, 7, 3], np.random.default_rng(11), (5,))
    save_checkpoint(tmp_path / "m", m, TemperatureScaler(1.5))
    m2, s2 = load_checkpoint(tmp_path / "m")
    assert s2.T == 1.5 and m2.sizes == [5, 7, 3] and m2.input_shape == (5,)
    x = np.random.default_rng(12).random(5)
    assert np.allclose(m2.logits(x), m.logits(x), atol=1e-4)
