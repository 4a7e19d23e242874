"""Training, evaluation, prediction, and the scheme comparison.

A batch is a list of encoded units: whole sentences under the anchored
scheme (one forward scores all aspects) or single-aspect instances
under the baseline.  Every stochastic choice is derived from the run
seed, the epoch, and the unit index, so a run is reproducible bit for
bit and two runs differ only through their seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .aspect_head import classify, gather_anchors, joint_loss
from .config import RunConfig
from .data import Corpus, SyntheticSpec, cue_regions
from .encoder import (
    EVAL,
    TRAIN,
    ModelConfig,
    Params,
    average_attention,
    forward,
    init_params,
)
from .errors import DivergenceDetected, TaskMismatch, UnlabeledAspect
from .metrics import MetricsReport, score
from .numerics import Tape, Tensor
from .optimizer import AdamState, adam_step, init_adam
from .tokenizer import (
    CATEGORIES,
    EncodedSequence,
    Example,
    Polarity,
    Vocab,
    acsa_word_positions,
    atsa_word_positions,
    encode_baseline_single,
    encode_tmm_acsa,
    encode_tmm_atsa,
)


def build_vocab(corpus: Corpus, min_frequency: int = 1) -> Vocab:
    """Vocabulary over the training sentences; ACSA adds the category
    inventory so the appended category tokens always resolve."""
    extra = CATEGORIES if corpus.task == "acsa" else ()
    return Vocab.build((ex.tokens for ex in corpus.examples), min_frequency, extra)


def encode_corpus(
    corpus: Corpus, vocab: Vocab, scheme: str, max_len: int = 128
) -> list[EncodedSequence]:
    """One unit per sentence (tmm) or per aspect instance (baseline)."""
    units: list[EncodedSequence] = []
    for ex in corpus.examples:
        if scheme == "tmm":
            if corpus.task == "atsa":
                units.append(encode_tmm_atsa(ex, vocab, max_len))
            else:
                units.append(encode_tmm_acsa(ex, vocab, max_len))
        else:
            units.extend(
                encode_baseline_single(ex, i, vocab, max_len)
                for i in range(len(ex.aspects))
            )
    return units


def _require_labels(units: Sequence[EncodedSequence]) -> None:
    for u in units:
        if u.anchors and u.gold is None:
            raise UnlabeledAspect("corpus has aspects without gold polarity")


def _unit_seed(run_seed: int, epoch: int, index: int) -> int:
    return int(np.random.SeedSequence([run_seed, epoch, index]).generate_state(1)[0])


def _classify_unit(
    unit: EncodedSequence, params: Params, config: ModelConfig, mode: str, seed: int
):
    hidden, record = forward(unit.ids, params, config, mode=mode, seed=seed)
    reps = gather_anchors(hidden, unit.anchors)
    return classify(reps, params["cls.w"], params["cls.b"]), record


def evaluate(
    units: Sequence[EncodedSequence], params: Params, config: ModelConfig
) -> tuple[MetricsReport, int]:
    """Deterministic eval-mode scoring; also returns the forward count,
    which is the unit count (sentences for tmm, aspects for baseline)."""
    _require_labels(units)
    predictions: list[Polarity] = []
    gold: list[Polarity] = []
    forwards = 0
    for unit in units:
        dist, _ = _classify_unit(unit, params, config, EVAL, 0)
        forwards += 1
        predictions.extend(dist.predictions())
        if unit.gold:
            gold.extend(unit.gold)
    return score(predictions, gold), forwards


@dataclass
class TrainResult:
    params: Params  # best-epoch copy
    best_epoch: int
    best_dev_macro_f1: float
    epoch_log: list[dict]
    adam: AdamState
    stopped_early: bool


def _copy_params(params: Params) -> Params:
    return {k: Tensor(t.data.copy()) for k, t in params.items()}


def train_single(
    train_units: Sequence[EncodedSequence],
    dev_units: Sequence[EncodedSequence],
    config: RunConfig,
    model_config: ModelConfig,
    run_seed: int,
) -> TrainResult:
    """One seeded run: shuffled mini-batches, Adam, early stopping on
    dev Macro-F1 with the configured patience."""
    _require_labels(train_units)
    params = init_params(model_config, run_seed)
    adam = init_adam(
        params,
        alpha=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        clip_norm=config.clip_norm,
    )
    best = _copy_params(params)
    best_macro, best_epoch = -1.0, 0
    bad_epochs = 0
    log: list[dict] = []
    stopped = False
    for epoch in range(1, config.epochs + 1):
        shuffle_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([run_seed, epoch]))
        )
        order = shuffle_rng.permutation(len(train_units))
        raw_total, aspect_total, clipped_total = 0.0, 0, 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            for t in params.values():
                t.zero_grad()
            with Tape() as tape:
                dists, golds = [], []
                for idx in batch:
                    unit = train_units[int(idx)]
                    dist, _ = _classify_unit(
                        unit, params, model_config, TRAIN,
                        _unit_seed(run_seed, epoch, int(idx)),
                    )
                    dists.append(dist)
                    golds.append(unit.gold or ())
                result = joint_loss(dists, golds, reduction=config.loss_reduction)
                if not math.isfinite(result.loss.item()):
                    raise DivergenceDetected(
                        f"non-finite loss in epoch {epoch} (run seed {run_seed})"
                    )
                tape.backward(result.loss)
            grads = {
                k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in params.items()
            }
            adam_step(params, grads, adam)
            raw_total += result.raw
            aspect_total += result.aspect_count
            clipped_total += result.clipped
        dev_report, _ = evaluate(dev_units, params, model_config)
        log.append(
            {
                "epoch": epoch,
                "train_loss": raw_total / aspect_total,
                "dev_macro_f1": dev_report.macro_f1,
                "dev_accuracy": dev_report.accuracy,
                "clipped": clipped_total,
            }
        )
        if dev_report.macro_f1 > best_macro:
            best_macro = dev_report.macro_f1
            best_epoch = epoch
            best = _copy_params(params)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                stopped = True
                break
    return TrainResult(best, best_epoch, best_macro, log, adam, stopped)


@dataclass
class SingleRun:
    seed: int
    result: TrainResult
    test_report: MetricsReport
    test_forwards: int


@dataclass
class RunsOutcome:
    config: RunConfig
    model_config: ModelConfig
    vocab: Vocab
    runs: list[SingleRun]
    averaged: dict
    sentences: int
    aspects: int

    def run_seeds(self) -> list[int]:
        return [r.seed for r in self.runs]


def average_reports(reports: Sequence[MetricsReport]) -> dict:
    """Elementwise mean of the machine-readable report dicts."""
    dicts = [r.to_dict() for r in reports]

    def merge(values):
        if isinstance(values[0], dict):
            return {k: merge([v[k] for v in values]) for k in values[0]}
        return float(np.mean(values))

    return merge(dicts)


def run_training(config: RunConfig, corpora: tuple[Corpus, Corpus, Corpus]) -> RunsOutcome:
    """`config.runs` seeded trainings (seed, seed+1, ...) with averaged
    test metrics, mirroring the run-three-times-and-average protocol."""
    train_corpus, dev_corpus, test_corpus = corpora
    for c in (dev_corpus, test_corpus):
        if c.task != train_corpus.task:
            raise TaskMismatch(f"{c.split} task {c.task!r} != train task {train_corpus.task!r}")
    vocab = build_vocab(train_corpus, config.min_frequency)
    model_config = config.model_config(len(vocab))
    train_units = encode_corpus(train_corpus, vocab, config.scheme, config.max_len)
    dev_units = encode_corpus(dev_corpus, vocab, config.scheme, config.max_len)
    test_units = encode_corpus(test_corpus, vocab, config.scheme, config.max_len)
    runs: list[SingleRun] = []
    for r in range(config.runs):
        run_seed = config.seed + r
        result = train_single(train_units, dev_units, config, model_config, run_seed)
        report, forwards = evaluate(test_units, result.params, model_config)
        runs.append(SingleRun(run_seed, result, report, forwards))
    return RunsOutcome(
        config=config,
        model_config=model_config,
        vocab=vocab,
        runs=runs,
        averaged=average_reports([r.test_report for r in runs]),
        sentences=len(test_corpus),
        aspects=sum(len(ex.aspects) for ex in test_corpus.examples),
    )


@dataclass
class ComparisonOutcome:
    tmm: RunsOutcome
    baseline: RunsOutcome

    def to_dict(self) -> dict:
        tmm_macro = self.tmm.averaged["macro_f1"]
        base_macro = self.baseline.averaged["macro_f1"]
        return {
            "tmm": self.tmm.averaged,
            "baseline": self.baseline.averaged,
            "delta_macro_f1": tmm_macro - base_macro,
            "test_sentences": self.tmm.sentences,
            "test_aspects": self.tmm.aspects,
            "tmm_forwards_per_run": [r.test_forwards for r in self.tmm.runs],
            "baseline_forwards_per_run": [r.test_forwards for r in self.baseline.runs],
            "seeds": self.tmm.run_seeds(),
        }


def compare(config: RunConfig, corpora: tuple[Corpus, Corpus, Corpus]) -> ComparisonOutcome:
    """Train both schemes under identical budgets and seeds.

    The unit economy is part of the report: the anchored scheme runs one
    forward per test sentence, the baseline one per test aspect.
    """
    tmm = run_training(replace(config, scheme="tmm"), corpora)
    baseline = run_training(replace(config, scheme="baseline-single"), corpora)
    outcome = ComparisonOutcome(tmm, baseline)
    d = outcome.to_dict()
    assert d["tmm_forwards_per_run"] == [d["test_sentences"]] * config.runs
    assert d["baseline_forwards_per_run"] == [d["test_aspects"]] * config.runs
    return outcome


def predict_examples(
    examples: Sequence[Example],
    params: Params,
    model_config: ModelConfig,
    vocab: Vocab,
    task: str,
    scheme: str,
    max_len: int = 128,
) -> list[list[tuple[Polarity, list[float]]]]:
    """Per example, per aspect: predicted polarity and its distribution."""
    out = []
    for ex in examples:
        per_aspect: list[tuple[Polarity, list[float]]] = []
        if scheme == "tmm":
            enc = (
                encode_tmm_atsa(ex, vocab, max_len)
                if task == "atsa"
                else encode_tmm_acsa(ex, vocab, max_len)
            )
            dist, _ = _classify_unit(enc, params, model_config, EVAL, 0)
            matrix = dist.matrix()
            for i, pred in enumerate(dist.predictions()):
                per_aspect.append((pred, matrix[i].tolist()))
        else:
            for i in range(len(ex.aspects)):
                enc = encode_baseline_single(ex, i, vocab, max_len)
                dist, _ = _classify_unit(enc, params, model_config, EVAL, 0)
                per_aspect.append((dist.predictions()[0], dist.matrix()[0].tolist()))
        out.append(per_aspect)
    return out


def attention_for_example(
    example: Example,
    params: Params,
    model_config: ModelConfig,
    vocab: Vocab,
    task: str,
    layer: int | str = "all",
    max_len: int = 128,
) -> tuple[EncodedSequence, np.ndarray]:
    """Head-averaged attention over the anchored encoding of one example."""
    enc = (
        encode_tmm_atsa(example, vocab, max_len)
        if task == "atsa"
        else encode_tmm_acsa(example, vocab, max_len)
    )
    _, record = forward(enc.ids, params, model_config, mode=EVAL)
    return enc, average_attention(record, layer)


def cue_localization_rate(
    corpus: Corpus,
    spec: SyntheticSpec,
    params: Params,
    model_config: ModelConfig,
    vocab: Vocab,
    layer: int | str = "all",
    max_len: int = 128,
) -> tuple[float, int, int]:
    """Fraction of anchors whose largest non-special attention weight
    falls inside their own aspect's predicate (cue) region."""
    from .tokenizer import RESERVED

    n_reserved = len(RESERVED)
    hits, total = 0, 0
    for ex in corpus.examples:
        enc, avg = attention_for_example(ex, params, model_config, vocab, corpus.task, layer, max_len)
        word_pos = (
            atsa_word_positions(ex) if corpus.task == "atsa" else acsa_word_positions(ex)
        )
        ids = np.asarray(enc.ids)
        candidates = ids >= n_reserved  # real words and category tokens
        regions = cue_regions(ex, spec)
        for anchor, (lo, hi) in zip(enc.anchors, regions):
            row = np.where(candidates, avg[anchor], -np.inf)
            top = int(row.argmax())
            region_positions = {word_pos[w] for w in range(lo, hi)}
            hits += top in region_positions
            total += 1
    return (hits / total if total else 0.0), hits, total
