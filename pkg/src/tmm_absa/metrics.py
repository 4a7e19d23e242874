"""Per-class precision/recall/F1, Macro-F1, accuracy, and the combined
two-subtask score.

Macro-F1 is the unweighted mean of the three per-class F1 values, and
any measure with a zero denominator is defined as 0 (the usual
shared-task convention).  Confusion counts are additive, so shards can
be scored independently and merged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyInput, LengthMismatch
from .tokenizer import Polarity

CLASS_NAMES = ("positive", "neutral", "negative")


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class true positives, false positives, false negatives."""

    tp: tuple[int, int, int]
    fp: tuple[int, int, int]
    fn: tuple[int, int, int]
    total: int

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        pair = lambda a, b: tuple(x + y for x, y in zip(a, b))
        return ConfusionCounts(
            pair(self.tp, other.tp),
            pair(self.fp, other.fp),
            pair(self.fn, other.fn),
            self.total + other.total,
        )


@dataclass(frozen=True)
class MetricsReport:
    precision: tuple[float, float, float]
    recall: tuple[float, float, float]
    f1: tuple[float, float, float]
    macro_f1: float
    accuracy: float
    total: int
    combined: float | None = None

    def to_dict(self) -> dict:
        """Full-precision machine-readable form with fixed field names."""
        out: dict = {
            "per_class": {
                name: {"p": self.precision[i], "r": self.recall[i], "f1": self.f1[i]}
                for i, name in enumerate(CLASS_NAMES)
            },
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
        }
        if self.combined is not None:
            out["combined"] = self.combined
        return out

    def display(self) -> str:
        """4-decimal table for terminals; the dict keeps full precision."""
        lines = [f"{'class':<12} {'P':>8} {'R':>8} {'F1':>8}"]
        for i, name in enumerate(CLASS_NAMES):
            lines.append(
                f"{name:<12} {self.precision[i]:>8.4f} "
                f"{self.recall[i]:>8.4f} {self.f1[i]:>8.4f}"
            )
        lines.append(f"macro_f1 {self.macro_f1:.4f}  accuracy {self.accuracy:.4f}")
        if self.combined is not None:
            lines.append(f"combined {self.combined:.4f}")
        return "\n".join(lines)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def count_confusion(
    predictions: Sequence[Polarity | int], gold: Sequence[Polarity | int]
) -> ConfusionCounts:
    if len(predictions) != len(gold):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(gold)} gold labels")
    if not gold:
        raise EmptyInput("cannot score an empty label list")
    tp, fp, fn = [0, 0, 0], [0, 0, 0], [0, 0, 0]
    for p, g in zip(predictions, gold):
        p, g = Polarity(p), Polarity(g)
        if p == g:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return ConfusionCounts(tuple(tp), tuple(fp), tuple(fn), len(gold))


def report_from_counts(counts: ConfusionCounts) -> MetricsReport:
    precision, recall, f1 = [], [], []
    for c in range(3):
        p = _ratio(counts.tp[c], counts.tp[c] + counts.fp[c])
        r = _ratio(counts.tp[c], counts.tp[c] + counts.fn[c])
        precision.append(p)
        recall.append(r)
        f1.append(_ratio(2.0 * p * r, p + r))
    return MetricsReport(
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        macro_f1=sum(f1) / 3.0,
        accuracy=sum(counts.tp) / counts.total,
        total=counts.total,
    )


def score(
    predictions: Sequence[Polarity | int], gold: Sequence[Polarity | int]
) -> MetricsReport:
    return report_from_counts(count_confusion(predictions, gold))


def combined_score(first: MetricsReport, second: MetricsReport) -> float:
    """Arithmetic mean of two subtask Macro-F1 values."""
    return (first.macro_f1 + second.macro_f1) / 2.0
