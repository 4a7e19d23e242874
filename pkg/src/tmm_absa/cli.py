"""Command-line harness.

Subcommands: gen-data, train, evaluate, predict, attn, grad-check,
compare.  Exit codes: 0 success, 1 validation error, 2 numerical
failure.  Every artifact (records, checkpoints, reports, heatmaps) is
byte-deterministic given the config and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .checks import all_passed, results_to_dict, run_all_checks
from .config import RunConfig, load_run_config, with_overrides
from .data import (
    SyntheticSpec,
    compute_stats,
    generate_synthetic,
    load_corpus,
    save_corpus,
)
from .errors import NumericalError, ParseError, ValidationError
from .heatmap import save_attention_html, save_attention_matrix
from .tokenizer import AtsaExample
from .train import (
    attention_for_example,
    compare,
    encode_corpus,
    evaluate as evaluate_units,
    predict_examples,
    run_training,
)


class _Parser(argparse.ArgumentParser):
    """Usage errors map to the validation exit code, not argparse's 2."""

    def error(self, message: str):
        raise ParseError(message)


def _layer_arg(value: str):
    return value if value == "all" else int(value)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tmm-absa", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (key = value lines)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument(
        "--data", help="data directory, or a records file for evaluate/predict/attn"
    )
    common.add_argument("--out", help="artifact directory (reports, checkpoints)")
    common.add_argument(
        "--scheme", choices=("tmm", "baseline", "baseline-single"),
        help="encoding scheme",
    )
    common.add_argument(
        "--layer", type=_layer_arg, default="all",
        help="attention layer index, or 'all' for the mean (attn only)",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-data", parents=[common], help="write synthetic record files")
    p.add_argument("--train-sentences", type=int, default=SyntheticSpec.train_sentences)
    p.add_argument("--dev-sentences", type=int, default=SyntheticSpec.dev_sentences)
    p.add_argument("--test-sentences", type=int, default=SyntheticSpec.test_sentences)
    p.add_argument("--mean-aspects", type=float, default=SyntheticSpec.mean_aspects)
    p.add_argument("--cross-cue-prob", type=float, default=SyntheticSpec.cross_cue_prob)
    p.set_defaults(func=cmd_gen_data)

    for name, func, blurb in (
        ("train", cmd_train, "train, early-stop on dev, report on test"),
        ("evaluate", cmd_evaluate, "score a checkpoint on a records file"),
        ("predict", cmd_predict, "write per-aspect predictions"),
        ("attn", cmd_attn, "export attention heatmaps"),
        ("grad-check", cmd_grad_check, "finite-difference gradient audit"),
        ("compare", cmd_compare, "train both schemes under identical budgets"),
    ):
        sub.add_parser(name, parents=[common], help=blurb).set_defaults(func=func)
    return parser


def _load_config(args, data_is_dir: bool) -> RunConfig:
    out = args.out
    if out is not None and Path(out).is_file():
        out = None  # --out named a checkpoint file; artifacts keep the default dir
    overrides = {
        "seed": args.seed,
        "scheme": args.scheme,
        "out_dir": out,
        "data_dir": args.data if data_is_dir else None,
    }
    if args.config:
        return load_run_config(args.config, **overrides)
    return with_overrides(RunConfig(), **overrides)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _records_file(config: RunConfig, args, split: str) -> Path:
    if args.data:
        p = Path(args.data)
        return p / f"{config.task}-{split}.records" if p.is_dir() else p
    return config.data_path(split)


def _load_split_corpora(config: RunConfig):
    return tuple(
        load_corpus(config.data_path(split), config.task, split)
        for split in ("train", "dev", "test")
    )


def _checkpoint_file(config: RunConfig, args) -> Path:
    p = Path(args.out) if args.out else Path(config.out_dir)
    return p / "model.ckpt" if p.is_dir() else p


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_gen_data(args) -> int:
    config = _load_config(args, data_is_dir=True)
    spec = SyntheticSpec(
        seed=config.seed,
        task=config.task,
        train_sentences=args.train_sentences,
        dev_sentences=args.dev_sentences,
        test_sentences=args.test_sentences,
        mean_aspects=args.mean_aspects,
        cross_cue_prob=args.cross_cue_prob,
    )
    Path(config.data_dir).mkdir(parents=True, exist_ok=True)
    for corpus in generate_synthetic(spec):
        path = config.data_path(corpus.split)
        save_corpus(corpus, path)
        print(f"{corpus.split}: {compute_stats(corpus).display()}  -> {path}")
    return 0


def _run_report(config: RunConfig, outcome) -> dict:
    return {
        "task": config.task,
        "scheme": config.scheme,
        "seeds": outcome.run_seeds(),
        "averaged": outcome.averaged,
        "runs": [
            {
                "seed": run.seed,
                "best_epoch": run.result.best_epoch,
                "best_dev_macro_f1": run.result.best_dev_macro_f1,
                "stopped_early": run.result.stopped_early,
                "epoch_log": run.result.epoch_log,
                "test": run.test_report.to_dict(),
                "test_forwards": run.test_forwards,
            }
            for run in outcome.runs
        ],
    }


def cmd_train(args) -> int:
    config = _load_config(args, data_is_dir=True)
    outcome = run_training(config, _load_split_corpora(config))
    out = _out_dir(config)
    for i, run in enumerate(outcome.runs):
        checkpoint = Checkpoint(
            params=run.result.params,
            config=outcome.model_config,
            vocab=outcome.vocab,
            metadata={
                "task": config.task,
                "scheme": config.scheme,
                "seed": run.seed,
                "best_epoch": run.result.best_epoch,
                "best_dev_macro_f1": run.result.best_dev_macro_f1,
            },
        )
        save_checkpoint(out / f"model-seed{run.seed}.ckpt", checkpoint)
        if i == 0:
            save_checkpoint(out / "model.ckpt", checkpoint)
    _write_json(out / "train-report.json", _run_report(config, outcome))
    for run in outcome.runs:
        print(
            f"seed {run.seed}: best epoch {run.result.best_epoch} "
            f"dev macro_f1 {run.result.best_dev_macro_f1:.4f} "
            f"test macro_f1 {run.test_report.macro_f1:.4f}"
        )
    avg = outcome.averaged
    print(f"averaged over {len(outcome.runs)} runs: "
          f"accuracy {avg['accuracy']:.4f} macro_f1 {avg['macro_f1']:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args, data_is_dir=False)
    checkpoint = load_checkpoint(_checkpoint_file(config, args))
    task = checkpoint.metadata.get("task", config.task)
    scheme = checkpoint.metadata.get("scheme", config.scheme)
    corpus = load_corpus(_records_file(config, args, "test"), task, "test")
    units = encode_corpus(corpus, checkpoint.vocab, scheme, checkpoint.config.max_len)
    report, forwards = evaluate_units(units, checkpoint.params, checkpoint.config)
    out = _out_dir(config)
    _write_json(
        out / "eval-report.json",
        {"task": task, "scheme": scheme, "metrics": report.to_dict(), "forwards": forwards},
    )
    print(report.display())
    print(f"forwards {forwards} ({'sentences' if scheme == 'tmm' else 'aspect instances'})")
    return 0


def _aspect_row(example, aspect, predicted, probs) -> dict:
    row: dict = {}
    if isinstance(example, AtsaExample):
        row["term"] = " ".join(example.tokens[aspect.start : aspect.end])
        row["from"] = aspect.start
        row["to"] = aspect.end
    else:
        row["category"] = aspect.category
    if aspect.polarity is not None:
        row["polarity"] = aspect.polarity.name
    row["predicted"] = predicted.name
    row["probs"] = probs
    return row


def cmd_predict(args) -> int:
    config = _load_config(args, data_is_dir=False)
    checkpoint = load_checkpoint(_checkpoint_file(config, args))
    task = checkpoint.metadata.get("task", config.task)
    scheme = checkpoint.metadata.get("scheme", config.scheme)
    corpus = load_corpus(
        _records_file(config, args, "test"), task, "test", allow_unlabeled=True
    )
    predicted = predict_examples(
        corpus.examples, checkpoint.params, checkpoint.config, checkpoint.vocab,
        task, scheme, checkpoint.config.max_len,
    )
    lines = []
    for example, rows in zip(corpus.examples, predicted):
        record = {
            "text": " ".join(example.tokens),
            "task": task,
            "aspects": [
                _aspect_row(example, aspect, pred, probs)
                for aspect, (pred, probs) in zip(example.aspects, rows)
            ],
        }
        lines.append(json.dumps(record, sort_keys=True))
    out = _out_dir(config)
    (out / "predictions.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    return 0


def cmd_attn(args) -> int:
    config = _load_config(args, data_is_dir=False)
    checkpoint = load_checkpoint(_checkpoint_file(config, args))
    task = checkpoint.metadata.get("task", config.task)
    corpus = load_corpus(
        _records_file(config, args, "test"), task, "test", allow_unlabeled=True
    )
    out = _out_dir(config)
    for i, example in enumerate(corpus.examples):
        encoded, avg = attention_for_example(
            example, checkpoint.params, checkpoint.config, checkpoint.vocab,
            task, args.layer, checkpoint.config.max_len,
        )
        save_attention_matrix(out / f"attn-{i:03d}.txt", encoded, avg, checkpoint.vocab)
        save_attention_html(
            out / f"attn-{i:03d}.html", encoded, avg, checkpoint.vocab,
            title=f"attention {i} (layer {args.layer})",
        )
    print(f"wrote {len(corpus.examples)} heatmap pairs to {out}")
    return 0


def cmd_grad_check(args) -> int:
    config = _load_config(args, data_is_dir=True)
    results = run_all_checks(seed=config.seed)
    for result in results:
        print(result.line())
    if args.out:
        _write_json(_out_dir(config) / "grad-check.json", results_to_dict(results))
    if not all_passed(results):
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args, data_is_dir=True)
    outcome = compare(config, _load_split_corpora(config))
    out = _out_dir(config)
    payload = outcome.to_dict()
    payload["tmm_runs"] = _run_report(config, outcome.tmm)["runs"]
    payload["baseline_runs"] = _run_report(config, outcome.baseline)["runs"]
    _write_json(out / "compare-report.json", payload)
    print(f"tmm:      accuracy {payload['tmm']['accuracy']:.4f} "
          f"macro_f1 {payload['tmm']['macro_f1']:.4f} "
          f"forwards {payload['tmm_forwards_per_run'][0]} per run")
    print(f"baseline: accuracy {payload['baseline']['accuracy']:.4f} "
          f"macro_f1 {payload['baseline']['macro_f1']:.4f} "
          f"forwards {payload['baseline_forwards_per_run'][0]} per run")
    print(f"delta macro_f1 {payload['delta_macro_f1']:+.4f} "
          f"over seeds {payload['seeds']}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.error("a subcommand is required")
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
