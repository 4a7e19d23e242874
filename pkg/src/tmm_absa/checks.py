"""Self-diagnostic gradient checks: every autodiff primitive against
central finite differences, plus the joint loss end to end through a
toy encoder.  The CLI surfaces these as the grad-check subcommand."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .aspect_head import classify, gather_anchors, joint_loss
from .encoder import EVAL, ModelConfig, forward, init_params
from .numerics import Tensor
from .tokenizer import Polarity

PRIMITIVE_TOLERANCE = 1e-6
END_TO_END_TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "max_rel_err", float(self.max_rel_err))

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err < self.tolerance)

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"op={self.name} max_rel_err={self.max_rel_err:.3e} "
            f"tolerance={self.tolerance:.0e} status={status}"
        )


def _weigh(out: Tensor, w: Tensor) -> Tensor:
    # Random weighting keeps constant-sum outputs (softmax rows) from
    # collapsing to a zero gradient.
    return nm.sum_all(nm.mul(out, w))


def run_primitive_checks(h: float = 1e-5, seed: int = 0) -> list[CheckResult]:
    rng = np.random.Generator(np.random.PCG64(seed))

    def t(*shape):
        return Tensor(rng.normal(0.0, 1.0, size=shape))

    w34, w33, w24, w43, w44 = t(3, 4), t(3, 3), t(2, 4), t(4, 3), t(4, 4)
    gain, bias = Tensor(rng.uniform(0.5, 1.5, size=4)), t(4)
    probs = Tensor(rng.uniform(0.2, 0.8, size=(3, 3)))
    table = t(5, 4)
    ids = [0, 3, 1, 3]
    targets = [0, 2, 1]

    cases = [
        ("matmul", lambda i: nm.sum_all(nm.matmul(i[0], i[1])), [t(3, 4), t(4, 2)]),
        ("transpose", lambda i: _weigh(nm.transpose(i[0]), w43), [t(3, 4)]),
        ("add", lambda i: nm.sum_all(nm.add(i[0], i[1])), [t(3, 4), t(3, 4)]),
        ("add_bias", lambda i: _weigh(nm.add(i[0], i[1]), w34), [t(3, 4), t(4)]),
        ("mul", lambda i: nm.sum_all(nm.mul(i[0], i[1])), [t(3, 4), t(3, 4)]),
        ("scale", lambda i: nm.sum_all(nm.scale(i[0], 0.37)), [t(3, 4)]),
        ("gelu", lambda i: _weigh(nm.gelu(i[0]), w34), [t(3, 4)]),
        ("softmax_rows", lambda i: _weigh(nm.softmax_rows(i[0]), w33), [t(3, 3)]),
        (
            "layer_norm",
            lambda i: _weigh(nm.layer_norm(i[0], i[1], i[2], 1e-5), w34),
            [t(3, 4), gain, bias],
        ),
        (
            "embedding_lookup",
            lambda i: _weigh(nm.embedding_lookup(i[0], ids), w44),
            [table],
        ),
        (
            "dropout",
            lambda i: _weigh(nm.dropout(i[0], 0.5, seed=123, train=True), w34),
            [t(3, 4)],
        ),
        (
            "concat_rows",
            lambda i: _weigh(nm.concat_rows([i[0], i[1]]), Tensor(np.ones((5, 4)))),
            [t(3, 4), t(2, 4)],
        ),
        (
            "concat_cols",
            lambda i: _weigh(nm.concat_cols([i[0], i[1]]), Tensor(np.ones((2, 7)))),
            [t(2, 4), t(2, 3)],
        ),
        ("slice_rows", lambda i: _weigh(nm.slice_rows(i[0], 1, 3), w24), [t(4, 4)]),
        ("slice_cols", lambda i: _weigh(nm.slice_cols(i[0], 1, 4), w33), [t(3, 5)]),
        ("sum_all", lambda i: nm.sum_all(i[0]), [t(3, 4)]),
        (
            "nll_sum",
            lambda i: nm.nll_sum(i[0], targets),
            [probs],
        ),
    ]
    results = []
    for name, f, inputs in cases:
        err = nm.grad_check(f, inputs, h)
        results.append(CheckResult(name, err, PRIMITIVE_TOLERANCE))
    return results


def run_end_to_end_check(h: float = 1e-5, seed: int = 0) -> CheckResult:
    """Joint loss through a 1-layer, 2-head, width-8 encoder, checked
    against finite differences for every parameter coordinate."""
    config = ModelConfig(
        vocab_size=16, layers=1, heads=2, hidden=8, ffn=32, max_len=12, dropout=0.0
    )
    params = init_params(config, seed)
    ids = [4, 2, 7, 3, 8, 2, 9, 3, 6]
    anchors = (1, 5)
    gold = (Polarity.positive, Polarity.negative)

    def f(_inputs):
        hidden, _ = forward(ids, params, config, mode=EVAL)
        reps = gather_anchors(hidden, anchors)
        dist = classify(reps, params["cls.w"], params["cls.b"])
        return joint_loss([dist], [gold], reduction="sum").loss

    inputs = [params[name] for name in sorted(params)]
    err = nm.grad_check(f, inputs, h)
    return CheckResult("end_to_end_loss", err, END_TO_END_TOLERANCE)


def run_all_checks(h: float = 1e-5, seed: int = 0) -> list[CheckResult]:
    return run_primitive_checks(h, seed) + [run_end_to_end_check(h, seed)]


def all_passed(results: list[CheckResult]) -> bool:
    return all(r.passed for r in results)


def results_to_dict(results: list[CheckResult]) -> dict:
    return {
        "checks": [
            {
                "name": r.name,
                "max_rel_err": r.max_rel_err,
                "tolerance": r.tolerance,
                "passed": r.passed,
            }
            for r in results
        ],
        "passed": all_passed(results),
    }
