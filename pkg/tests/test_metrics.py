import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvssnet.autodiff import UsageError
from mvssnet.metrics import auc, metrics, prf


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_examples():
    assert auc([0.9, 0.8], [1, 0]) == 1.0
    assert auc([0.5, 0.5], [1, 0]) == 0.5
    assert auc([0.1, 0.9], [1, 0]) == 0.0
    assert auc([0.5] * 6, [1, 0, 1, 0, 1, 1]) == 0.5
    assert math.isnan(auc([0.3, 0.4], [1, 1]))
    with pytest.raises(UsageError):
        auc([], [])


@settings(deadline=None, max_examples=80)
@given(st.lists(st.tuples(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 1.0]) | st.floats(0, 1), st.booleans()),
                min_size=2, max_size=200))
def test_auc_matches_all_pairs_oracle(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    if all(labels) or not any(labels):
        return
    assert abs(auc(scores, labels) - brute_auc(scores, labels)) < 1e-12


def test_prf_conventions():
    assert prf(np.zeros(4), np.zeros(4)) == (0.0, 0.0, 0.0)
    assert prf(np.array([1, 1, 0, 0]), np.array([1, 0, 0, 0])) == pytest.approx((0.5, 1.0, 2 / 3))


def _masks(n=3, size=8):
    m = np.zeros((n, size, size))
    for i in range(n):
        m[i, i : i + 3, 2:6] = 1
    return m


def test_oracle_predictions_perfect():
    masks = np.concatenate([_masks(), np.zeros((2, 8, 8))])
    labels = [1, 1, 1, 0, 0]
    r = metrics(masks, masks, np.array(labels, float), labels)
    assert r.pixel_f1 == 1.0 and r.image_auc == 1.0 and r.specificity == 1.0 and r.image_accuracy == 1.0
    assert (r.tp, r.fp, r.tn, r.fn) == (3, 0, 2, 0)


def test_complement_prediction_zero_f1():
    masks = _masks()
    r = metrics(1 - masks, masks, [0.9] * 3 + [], [1, 1, 1])
    assert r.pixel_f1 == 0.0
    assert math.isnan(r.image_auc) and math.isnan(r.specificity)


def test_constant_score_auc_half():
    masks = np.concatenate([_masks(2), np.zeros((2, 8, 8))])
    r = metrics(masks, masks, [0.5] * 4, [1, 1, 0, 0])
    assert r.image_auc == 0.5


def test_pixel_f1_only_on_manipulated():
    masks = np.concatenate([_masks(1), np.zeros((1, 8, 8))])
    preds = masks.copy()
    preds[1] = 1.0  # a false-positive map on the authentic image does not touch pixel F1
    r = metrics(preds, masks, [0.9, 0.2], [1, 0])
    assert r.pixel_f1 == 1.0 and r.specificity == 1.0


def test_threshold_and_ranges(rng):
    n = 20
    labels = rng.integers(0, 2, size=n)
    labels[:2] = [0, 1]
    masks = np.zeros((n, 8, 8))
    masks[labels == 1, 2:5, 2:5] = 1
    r = metrics(rng.random((n, 8, 8)), masks, rng.random(n), labels)
    for v in (r.pixel_f1, r.pixel_precision, r.pixel_recall, r.image_auc, r.image_accuracy, r.specificity):
        assert 0.0 <= v <= 1.0
    assert r.tp + r.fp + r.tn + r.fn == n
    assert r.n_manipulated + r.n_authentic == n
    assert "pixel_f1" in r.to_text() and r.as_dict()["tp"] == r.tp


def test_metrics_errors():
    with pytest.raises(UsageError):
        metrics([], [], [], [])
    with pytest.raises(UsageError):
        metrics(np.zeros((2, 4, 4)), np.zeros((1, 4, 4)), [0.1, 0.2], [0, 0])
