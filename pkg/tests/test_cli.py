"""End-to-end command-line tests, run in-process via main(argv)."""

import json
import math

import numpy as np
import pytest
from scipy.special import erf

import tmm_absa.numerics as nm
from tmm_absa.cli import main
from tmm_absa.config import RunConfig, save_run_config, with_overrides
from tmm_absa.numerics import Tensor

TINY = dict(
    layers=1,
    heads=2,
    hidden=16,
    ffn=32,
    lr=1e-3,
    batch_size=16,
    epochs=2,
    patience=5,
    seed=3,
    runs=1,
)

GEN_FLAGS = [
    "--train-sentences", "48",
    "--dev-sentences", "16",
    "--test-sentences", "16",
    "--mean-aspects", "2.0",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    out = root / "out"
    config_path = root / "run.cfg"
    config = with_overrides(
        RunConfig(), data_dir=str(data), out_dir=str(out), **TINY
    )
    save_run_config(config, config_path)
    assert main(["gen-data", "--config", str(config_path), *GEN_FLAGS]) == 0
    assert main(["train", "--config", str(config_path)]) == 0
    return root, config_path, data, out


def test_gen_data_writes_deterministic_records(tmp_path):
    argv = ["gen-data", "--data", str(tmp_path), *GEN_FLAGS]
    assert main(argv) == 0
    first = {p.name: p.read_bytes() for p in tmp_path.glob("*.records")}
    assert set(first) == {"atsa-train.records", "atsa-dev.records", "atsa-test.records"}
    assert main(argv) == 0
    second = {p.name: p.read_bytes() for p in tmp_path.glob("*.records")}
    assert first == second


def test_gen_data_prints_stats(tmp_path, capsys):
    main(["gen-data", "--data", str(tmp_path), *GEN_FLAGS])
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("train: Sen. 48  Asp. ")


def test_train_artifacts(workspace):
    _, _, _, out = workspace
    assert (out / "model.ckpt").exists()
    assert (out / f"model-seed{TINY['seed']}.ckpt").exists()
    report = json.loads((out / "train-report.json").read_text())
    assert report["scheme"] == "tmm"
    assert report["seeds"] == [TINY["seed"]]
    run = report["runs"][0]
    assert len(run["epoch_log"]) == TINY["epochs"]
    assert run["test_forwards"] == 16
    assert 0.0 <= report["averaged"]["macro_f1"] <= 1.0


def test_train_is_bit_deterministic(tmp_path, workspace):
    root, config_path, data, out = workspace
    out2 = tmp_path / "out2"
    assert main(["train", "--config", str(config_path), "--out", str(out2)]) == 0
    assert (out2 / "model.ckpt").read_bytes() == (out / "model.ckpt").read_bytes()
    assert (
        (out2 / "train-report.json").read_text()
        == (out / "train-report.json").read_text()
    )


def test_evaluate_reports_forward_economy(workspace, capsys, tmp_path):
    _, config_path, data, out = workspace
    assert main(["evaluate", "--config", str(config_path)]) == 0
    printed = capsys.readouterr().out
    assert "macro_f1" in printed or "Macro" in printed or "forwards 16" in printed
    payload = json.loads((out / "eval-report.json").read_text())
    assert payload["forwards"] == 16
    assert set(payload["metrics"]["per_class"]) == {"positive", "neutral", "negative"}


def test_evaluate_accepts_checkpoint_file_path(workspace, tmp_path):
    _, config_path, data, out = workspace
    assert main(
        [
            "evaluate",
            "--config", str(config_path),
            "--out", str(out / "model.ckpt"),
            "--data", str(data / "atsa-test.records"),
        ]
    ) == 0


def test_predict_writes_one_line_per_sentence(workspace, capsys):
    _, config_path, data, out = workspace
    assert main(["predict", "--config", str(config_path)]) == 0
    lines = (out / "predictions.jsonl").read_text().strip().splitlines()
    assert len(lines) == 16
    row = json.loads(lines[0])
    assert row["task"] == "atsa"
    for aspect in row["aspects"]:
        assert aspect["predicted"] in {"positive", "neutral", "negative"}
        assert len(aspect["probs"]) == 3
        assert math.isclose(sum(aspect["probs"]), 1.0, abs_tol=1e-9)


def test_predict_handles_unlabeled_records(workspace, tmp_path):
    _, config_path, data, out = workspace
    record = {
        "text": "the salmon is tasty",
        "task": "atsa",
        "aspects": [{"term": "salmon", "from": 1, "to": 2}],
    }
    path = tmp_path / "unlabeled.records"
    path.write_text("# tmm-absa v1\n" + json.dumps(record) + "\n")
    assert main(
        ["predict", "--config", str(config_path), "--data", str(path)]
    ) == 0
    lines = (out / "predictions.jsonl").read_text().strip().splitlines()
    assert len(lines) == 1
    aspect = json.loads(lines[0])["aspects"][0]
    assert "polarity" not in aspect
    assert aspect["term"] == "salmon"


def test_attn_exports_heatmaps(workspace):
    _, config_path, data, out = workspace
    assert main(["attn", "--config", str(config_path), "--layer", "0"]) == 0
    assert len(list(out.glob("attn-*.txt"))) == 16
    assert len(list(out.glob("attn-*.html"))) == 16
    text = (out / "attn-000.txt").read_text()
    assert text.startswith("# tmm-absa attn v1\n")


def test_attn_rejects_bad_layer(workspace):
    _, config_path, _, _ = workspace
    assert main(["attn", "--config", str(config_path), "--layer", "5"]) == 1


def test_grad_check_passes_and_reports(tmp_path, capsys):
    assert main(["grad-check", "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "op=matmul" in printed
    assert "op=end_to_end_loss" in printed
    assert "status=FAIL" not in printed
    payload = json.loads((tmp_path / "grad-check.json").read_text())
    assert payload["passed"] is True


def test_grad_check_corrupted_backward_exits_2(monkeypatch, capsys):
    def broken_gelu(x: Tensor) -> Tensor:
        xd = x.data
        cdf = 0.5 * (1.0 + erf(xd / math.sqrt(2.0)))
        out = Tensor(xd * cdf)

        def backward(g: np.ndarray) -> None:
            x.accumulate(g * cdf)  # density term dropped on purpose

        nm._record("gelu", out, backward)
        return out

    monkeypatch.setattr(nm, "gelu", broken_gelu)
    assert main(["grad-check"]) == 2
    assert "status=FAIL" in capsys.readouterr().out


def test_compare_reports_both_schemes(workspace, tmp_path, capsys):
    _, config_path, _, _ = workspace
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(config_path), "--out", str(out)]) == 0
    payload = json.loads((out / "compare-report.json").read_text())
    assert payload["tmm_forwards_per_run"] == [payload["test_sentences"]]
    assert payload["baseline_forwards_per_run"] == [payload["test_aspects"]]
    assert payload["test_sentences"] == 16
    printed = capsys.readouterr().out
    assert "delta macro_f1" in printed


def test_missing_subcommand_is_validation_error(capsys):
    assert main([]) == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_flag_is_validation_error(capsys):
    assert main(["train", "--nonsense"]) == 1


def test_missing_data_is_validation_error(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nowhere")]) == 1


def test_acsa_workflow_end_to_end(tmp_path, capsys):
    data = tmp_path / "d"
    out = tmp_path / "o"
    cfg = with_overrides(
        RunConfig(), task="acsa", data_dir=str(data), out_dir=str(out),
        **{**TINY, "epochs": 1},
    )
    cfg_path = tmp_path / "run.cfg"
    save_run_config(cfg, cfg_path)
    assert main(["gen-data", "--config", str(cfg_path), *GEN_FLAGS]) == 0
    assert (data / "acsa-train.records").exists()
    assert main(["train", "--config", str(cfg_path)]) == 0
    assert main(["predict", "--config", str(cfg_path)]) == 0
    lines = (out / "predictions.jsonl").read_text().strip().splitlines()
    assert len(lines) == 16
    aspect = json.loads(lines[0])["aspects"][0]
    assert "category" in aspect and "term" not in aspect
    assert main(["attn", "--config", str(cfg_path)]) == 0
    assert (out / "attn-000.html").exists()


def test_scheme_alias_accepted(tmp_path):
    data = tmp_path / "d"
    out = tmp_path / "o"
    assert main(["gen-data", "--data", str(data), *GEN_FLAGS]) == 0
    cfg = with_overrides(RunConfig(), data_dir=str(data), out_dir=str(out), **TINY)
    cfg_path = tmp_path / "run.cfg"
    save_run_config(cfg, cfg_path)
    assert main(["train", "--config", str(cfg_path), "--scheme", "baseline"]) == 0
    report = json.loads((out / "train-report.json").read_text())
    assert report["scheme"] == "baseline-single"
