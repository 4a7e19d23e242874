"""Gradient-check battery: positive runs and the corrupted-backward
negative control."""

import math
import time

import numpy as np
from scipy.special import erf

import tmm_absa.numerics as nm
from tmm_absa.checks import (
    END_TO_END_TOLERANCE,
    PRIMITIVE_TOLERANCE,
    all_passed,
    results_to_dict,
    run_all_checks,
    run_end_to_end_check,
    run_primitive_checks,
)
from tmm_absa.numerics import Tensor

EXPECTED_OPS = {
    "matmul",
    "transpose",
    "add",
    "add_bias",
    "mul",
    "scale",
    "gelu",
    "softmax_rows",
    "layer_norm",
    "embedding_lookup",
    "dropout",
    "concat_rows",
    "concat_cols",
    "slice_rows",
    "slice_cols",
    "sum_all",
    "nll_sum",
}


def test_every_primitive_passes():
    results = run_primitive_checks()
    assert {r.name for r in results} == EXPECTED_OPS
    for r in results:
        assert r.tolerance == PRIMITIVE_TOLERANCE
        assert r.passed, r.line()


def test_end_to_end_loss_passes_quickly():
    start = time.monotonic()
    result = run_end_to_end_check()
    elapsed = time.monotonic() - start
    assert result.name == "end_to_end_loss"
    assert result.tolerance == END_TO_END_TOLERANCE
    assert result.passed, result.line()
    assert elapsed < 120.0


def test_checks_are_deterministic():
    a = run_primitive_checks(seed=4)
    b = run_primitive_checks(seed=4)
    assert [(r.name, r.max_rel_err) for r in a] == [(r.name, r.max_rel_err) for r in b]


def _gelu_with_broken_backward(x: Tensor) -> Tensor:
    # Correct forward values, wrong derivative: the density term is dropped.
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / math.sqrt(2.0)))
    out = Tensor(xd * cdf)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * cdf)

    nm._record("gelu", out, backward)
    return out


def test_corrupted_backward_is_detected(monkeypatch):
    monkeypatch.setattr(nm, "gelu", _gelu_with_broken_backward)
    results = run_primitive_checks()
    by_name = {r.name: r for r in results}
    assert not by_name["gelu"].passed
    assert by_name["gelu"].max_rel_err > 1e-3
    assert not all_passed(results)
    assert by_name["matmul"].passed


def test_report_is_machine_readable():
    results = run_all_checks()
    d = results_to_dict(results)
    assert d["passed"] is True
    assert len(d["checks"]) == len(EXPECTED_OPS) + 1
    for entry in d["checks"]:
        assert set(entry) == {"name", "max_rel_err", "tolerance", "passed"}
    lines = [r.line() for r in results]
    assert all("status=pass" in line for line in lines)
    assert any(line.startswith("op=end_to_end_loss") for line in lines)
