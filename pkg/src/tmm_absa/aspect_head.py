"""Anchor pooling, per-aspect softmax classification, and the joint loss.

Every aspect of a sentence is classified from the hidden state at its
anchor token, so one forward pass scores all aspects jointly.  The raw
loss is the plain sum of per-aspect negative log-likelihoods; training
uses the aspect-count mean so the learning rate does not depend on
batch composition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nm
from .errors import AnchorOutOfRange, EmptyBatch, LengthMismatch, ProbabilityUnderflow
from .numerics import PROB_CLIP, Tensor
from .tokenizer import Polarity


@dataclass
class AspectRepresentation:
    """Anchor rows gathered from the hidden states; None when the
    sentence has no aspects (zero-size tensors are unsupported)."""

    vectors: Tensor | None

    @property
    def count(self) -> int:
        return 0 if self.vectors is None else self.vectors.shape[0]


@dataclass
class SentimentDistribution:
    """Per-aspect probability rows over (positive, neutral, negative)."""

    probs: Tensor | None

    @property
    def count(self) -> int:
        return 0 if self.probs is None else self.probs.shape[0]

    def matrix(self) -> np.ndarray:
        if self.probs is None:
            return np.zeros((0, 3))
        return self.probs.data.copy()

    def predictions(self) -> list[Polarity]:
        if self.probs is None:
            return []
        return [Polarity(int(i)) for i in self.probs.data.argmax(axis=1)]


def gather_anchors(hidden: Tensor, anchors: Sequence[int]) -> AspectRepresentation:
    """Copy hidden rows at the anchor positions; backward routes
    gradients only to those rows."""
    anchors = list(anchors)
    if not anchors:
        return AspectRepresentation(None)
    t = hidden.shape[0]
    bad = [a for a in anchors if not 0 <= a < t]
    if bad:
        raise AnchorOutOfRange(f"anchors {bad} outside [0, {t})")
    return AspectRepresentation(nm.embedding_lookup(hidden, anchors))


def classify(reps: AspectRepresentation, w: Tensor, b: Tensor) -> SentimentDistribution:
    """Softmax over w-projected anchor representations (one row per aspect)."""
    if reps.vectors is None:
        return SentimentDistribution(None)
    logits = nm.add(nm.matmul(reps.vectors, w), b)
    return SentimentDistribution(nm.softmax_rows(logits))


@dataclass
class LossResult:
    loss: Tensor  # optimization target under the requested reduction
    raw: float  # plain sum of per-aspect NLLs, always reported
    per_aspect: list[float]
    aspect_count: int
    clipped: int


def joint_loss(
    distributions: Sequence[SentimentDistribution],
    gold: Sequence[Sequence[Polarity]],
    reduction: str = "mean",
) -> LossResult:
    """Cross-entropy summed over every aspect of every sentence.

    reduction "sum" returns the raw sum; "mean" divides by the total
    aspect count.  Zero-aspect sentences contribute nothing; a batch
    with no aspects at all is an error.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
    if len(distributions) != len(gold):
        raise LengthMismatch(
            f"{len(distributions)} distributions vs {len(gold)} gold groups"
        )
    blocks: list[Tensor] = []
    targets: list[int] = []
    for dist, labels in zip(distributions, gold):
        if dist.count != len(labels):
            raise LengthMismatch(
                f"sentence has {dist.count} distributions but {len(labels)} labels"
            )
        if dist.count == 0:
            continue
        blocks.append(dist.probs)
        targets.extend(int(Polarity(y)) for y in labels)
    if not blocks:
        raise EmptyBatch("no aspects in the batch")
    probs = blocks[0] if len(blocks) == 1 else nm.concat_rows(blocks)
    n = len(targets)
    picked = probs.data[np.arange(n), targets]
    clipped = int((picked < PROB_CLIP).sum())
    if clipped:
        warnings.warn(
            f"{clipped} predicted probability(ies) below {PROB_CLIP:g} were "
            "clipped before the log",
            ProbabilityUnderflow,
            stacklevel=2,
        )
    per_aspect = (-np.log(np.maximum(picked, PROB_CLIP))).tolist()
    total = nm.nll_sum(probs, targets)
    loss = total if reduction == "sum" else nm.scale(total, 1.0 / n)
    return LossResult(loss, total.item(), per_aspect, n, clipped)
