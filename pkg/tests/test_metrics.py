"""Confusion metrics and AUC against a pairwise-counting oracle."""

import numpy as np
import pytest

from tslab.metrics import attach_auc, auc, confusion_metrics


def auc_pairwise_oracle(scores, labels) -> float:
    scores = np.asarray(scores, float)
    labels = np.asarray(labels, int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_confusion_worked_example():
    # TP=3, TN=1, FP=1, FN=1
    pred = [1, 1, 1, 1, 0, 0]
    lab = [1, 1, 1, 0, 1, 0]
    r = confusion_metrics(pred, lab)
    assert (r.tp, r.tn, r.fp, r.fn) == (3, 1, 1, 1)
    assert abs(r.acc - 0.6667) < 5e-5
    assert r.precision == 0.75 and r.recall == 0.75 and r.f1 == 0.75
    assert r.total == 6


def test_confusion_perfect():
    r = confusion_metrics([1, 0, 1, 0], [1, 0, 1, 0])
    assert r.acc == r.precision == r.recall == r.f1 == 1.0


def test_confusion_degenerate_undefined():
    r = confusion_metrics([1, 1, 1], [0, 0, 0])
    assert r.acc == 0.0
    assert r.precision == 0.0            # tp=0, fp=3 -> defined, zero
    assert r.recall is None              # no actual positives
    assert r.f1 is None
    r2 = confusion_metrics([0, 0], [0, 0])
    assert r2.precision is None          # nothing predicted positive
    assert r2.acc == 1.0


def test_confusion_permutation_invariance(rng):
    pred = rng.integers(0, 2, 50)
    lab = rng.integers(0, 2, 50)
    a = confusion_metrics(pred, lab)
    perm = rng.permutation(50)
    b = confusion_metrics(pred[perm], lab[perm])
    assert (a.tp, a.tn, a.fp, a.fn) == (b.tp, b.tn, b.fp, b.fn)


def test_confusion_validation():
    with pytest.raises(ValueError):
        confusion_metrics([1, 0], [1])
    with pytest.raises(ValueError):
        confusion_metrics([2, 0], [1, 0])
    with pytest.raises(ValueError):
        confusion_metrics([], [])


def test_auc_worked_examples():
    assert auc([0.9, 0.8, 0.4, 0.3], [1, 1, 0, 0]) == 1.0
    assert auc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]) == 0.75
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5


def test_auc_single_class_undefined():
    assert auc([0.1, 0.9], [1, 1]) is None
    assert auc([0.1, 0.9], [0, 0]) is None


def test_auc_matches_pairwise_oracle_200(rng):
    for k in range(200):
        n = int(rng.integers(4, 40))
        # discrete score pools force ties in about half the sets
        if k % 2 == 0:
            scores = rng.choice([0.1, 0.25, 0.5, 0.75, 0.9], size=n)
        else:
            scores = rng.uniform(0, 1, n)
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert abs(auc(scores, labels) - auc_pairwise_oracle(scores, labels)) < 1e-12


def test_auc_monotone_transform_invariant(rng):
    scores = rng.uniform(0, 1, 30)
    labels = rng.integers(0, 2, 30)
    labels[0], labels[1] = 0, 1
    base = auc(scores, labels)
    for f in (lambda s: 2.0 * s + 1.0, np.exp, lambda s: s**3 + s):
        assert abs(auc(f(scores), labels) - base) < 1e-12


def test_attach_auc():
    r = confusion_metrics([1, 0], [1, 0], split="t1", variant="gedf", method="scl")
    out = attach_auc(r, [0.9, 0.1], [1, 0])
    assert out.auc == 1.0 and out.split == "t1"
