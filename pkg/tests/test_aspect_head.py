"""Anchor pooling, classifier, and joint-loss contracts."""

import math

import numpy as np
import pytest

from tmm_absa.aspect_head import (
    SentimentDistribution,
    classify,
    gather_anchors,
    joint_loss,
)
from tmm_absa.errors import (
    AnchorOutOfRange,
    EmptyBatch,
    LengthMismatch,
    ProbabilityUnderflow,
)
from tmm_absa.numerics import Tape, Tensor, grad_check, softmax_rows, sum_all
from tmm_absa.tokenizer import Polarity

POS, NEU, NEG = Polarity.positive, Polarity.neutral, Polarity.negative


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


# --- gather_anchors ---------------------------------------------------------------


def test_gather_selects_exact_rows():
    hidden = Tensor(np.arange(40.0).reshape(10, 4))
    hidden.data[:, 0] = np.arange(10.0)  # hidden[t][0] = t
    reps = gather_anchors(hidden, [1, 8])
    assert reps.count == 2
    assert reps.vectors.data[0, 0] == 1.0 and reps.vectors.data[1, 0] == 8.0
    assert np.array_equal(reps.vectors.data, hidden.data[[1, 8]])


def test_gather_empty_anchor_list():
    reps = gather_anchors(Tensor(np.ones((4, 3))), [])
    assert reps.count == 0 and reps.vectors is None


def test_gather_out_of_range():
    with pytest.raises(AnchorOutOfRange):
        gather_anchors(Tensor(np.ones((4, 3))), [0, 4])
    with pytest.raises(AnchorOutOfRange):
        gather_anchors(Tensor(np.ones((4, 3))), [-1])


def test_gather_gradient_is_indicator():
    hidden = Tensor(rng(1).normal(size=(6, 3)))
    with Tape() as tape:
        reps = gather_anchors(hidden, [1, 4])
        tape.backward(sum_all(reps.vectors))
    want = np.zeros((6, 3))
    want[[1, 4]] = 1.0
    assert np.array_equal(hidden.grad, want)

    def f(ts):
        return sum_all(gather_anchors(ts[0], [1, 4]).vectors)

    assert grad_check(f, [Tensor(rng(2).normal(size=(6, 3)))]) < 1e-6


# --- classify ---------------------------------------------------------------------


def test_classify_zero_weights_uniform():
    reps = gather_anchors(Tensor(rng(3).normal(size=(5, 4))), [0, 2])
    dist = classify(reps, Tensor(np.zeros((4, 3))), Tensor(np.zeros(3)))
    assert np.allclose(dist.matrix(), 1.0 / 3.0, atol=1e-15)


def test_classify_dominating_bias():
    reps = gather_anchors(Tensor(rng(4).normal(size=(5, 4))), [1, 3])
    dist = classify(reps, Tensor(np.zeros((4, 3))), Tensor([10.0, 0.0, 0.0]))
    assert dist.predictions() == [POS, POS]
    assert np.all(dist.matrix()[:, 0] > 0.99)


def test_classify_matches_straight_line_oracle():
    g = rng(5)
    h = g.normal(size=(7, 4))
    w = g.normal(size=(4, 3))
    b = g.normal(size=3)
    dist = classify(gather_anchors(Tensor(h), [0, 3, 6]), Tensor(w), Tensor(b))
    logits = h[[0, 3, 6]] @ w + b
    z = logits - logits.max(axis=1, keepdims=True)
    want = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    assert np.abs(dist.matrix() - want).max() < 1e-12


def test_classify_empty_representation():
    dist = classify(gather_anchors(Tensor(np.ones((3, 2))), []), Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))
    assert dist.count == 0 and dist.predictions() == []
    assert dist.matrix().shape == (0, 3)


def test_distribution_rows_sum_to_one():
    g = rng(6)
    dist = classify(
        gather_anchors(Tensor(g.normal(size=(6, 5))), [0, 1, 5]),
        Tensor(g.normal(size=(5, 3))),
        Tensor(g.normal(size=3)),
    )
    assert np.abs(dist.matrix().sum(axis=1) - 1.0).max() < 1e-12


def test_logit_shift_invariance():
    g = rng(7)
    h = g.normal(size=(4, 5))
    w = g.normal(size=(5, 3))
    b = g.normal(size=3)
    reps = gather_anchors(Tensor(h), [0, 2])
    d1 = classify(reps, Tensor(w), Tensor(b))
    d2 = classify(reps, Tensor(w), Tensor(b + 17.5))  # same constant on every class
    assert np.abs(d1.matrix() - d2.matrix()).max() < 1e-12
    assert d1.predictions() == d2.predictions()


# --- joint_loss -------------------------------------------------------------------


def dist_from_logits(logits):
    return SentimentDistribution(softmax_rows(Tensor(logits)))


def test_perfect_predictions_near_zero_loss():
    logits = np.array([[60.0, 0.0, 0.0], [0.0, 0.0, 60.0]])
    res = joint_loss([dist_from_logits(logits)], [[POS, NEG]])
    assert res.loss.item() < 1e-11
    assert res.aspect_count == 2


def test_uniform_predictions_ln3():
    logits = np.zeros((3, 3))
    res = joint_loss([dist_from_logits(logits)], [[POS, NEU, NEG]])
    assert abs(res.loss.item() - math.log(3.0)) < 1e-12  # mean
    assert abs(res.raw - 3.0 * math.log(3.0)) < 1e-12
    assert all(abs(v - math.log(3.0)) < 1e-12 for v in res.per_aspect)


def test_direct_summation_oracle():
    g = rng(8)
    l1, l2 = g.normal(size=(2, 3)), g.normal(size=(3, 3))
    gold = [[POS, NEG], [NEU, NEU, POS]]
    res = joint_loss([dist_from_logits(l1), dist_from_logits(l2)], gold, reduction="sum")
    # independent triple loop over (sentence, aspect, class) with indicator
    want = 0.0
    for logits, labels in zip((l1, l2), gold):
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        for i, y in enumerate(labels):
            for j in range(3):
                if j == int(y):
                    want += -math.log(p[i, j])
    assert abs(res.loss.item() - want) < 1e-12
    assert abs(res.raw - want) < 1e-12


def test_raw_mode_is_additive():
    g = rng(9)
    la, lb = g.normal(size=(2, 3)), g.normal(size=(4, 3))
    ga, gb = [POS, NEU], [NEG, NEG, POS, NEU]
    both = joint_loss([dist_from_logits(la), dist_from_logits(lb)], [ga, gb], reduction="sum")
    one = joint_loss([dist_from_logits(la)], [ga], reduction="sum")
    two = joint_loss([dist_from_logits(lb)], [gb], reduction="sum")
    assert abs(both.loss.item() - (one.loss.item() + two.loss.item())) < 1e-12


def test_mean_is_sum_over_aspect_count():
    g = rng(10)
    logits = g.normal(size=(5, 3))
    gold = [[POS, NEU, NEG, POS, NEU]]
    s = joint_loss([dist_from_logits(logits)], gold, reduction="sum")
    m = joint_loss([dist_from_logits(logits)], gold, reduction="mean")
    assert abs(m.loss.item() - s.loss.item() / 5) < 1e-15


def test_gradient_wrt_logits_is_probs_minus_onehot():
    g = rng(11)
    logits = Tensor(g.normal(size=(4, 3)))
    gold = [POS, NEG, NEU, NEG]
    with Tape() as tape:
        dist = SentimentDistribution(softmax_rows(logits))
        res = joint_loss([dist], [gold], reduction="sum")
        tape.backward(res.loss)
    onehot = np.zeros((4, 3))
    onehot[np.arange(4), [int(y) for y in gold]] = 1.0
    want = dist.probs.data - onehot
    assert np.abs(logits.grad - want).max() < 1e-8


def test_zero_aspect_sentences_are_skipped():
    g = rng(12)
    logits = g.normal(size=(2, 3))
    res = joint_loss(
        [SentimentDistribution(None), dist_from_logits(logits)],
        [[], [POS, NEU]],
    )
    assert res.aspect_count == 2


def test_empty_batch_rejected():
    with pytest.raises(EmptyBatch):
        joint_loss([SentimentDistribution(None)], [[]])


def test_count_alignment_checked():
    logits = np.zeros((2, 3))
    with pytest.raises(LengthMismatch):
        joint_loss([dist_from_logits(logits)], [[POS]])
    with pytest.raises(LengthMismatch):
        joint_loss([dist_from_logits(logits)], [[POS, NEU], [NEG]])


def test_underflow_clipping_warns_and_counts():
    logits = np.array([[40.0, 0.0, 0.0]])  # picked prob ~ exp(-40) < 1e-12
    with pytest.warns(ProbabilityUnderflow):
        res = joint_loss([dist_from_logits(logits)], [[NEU]])
    assert res.clipped == 1
    assert res.loss.item() <= -math.log(1e-12) + 1e-9
