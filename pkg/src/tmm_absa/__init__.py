"""Joint multi-aspect sentiment classification with an anchored-sequence
transformer, built on a small float64 autodiff core and trained at desk
scale on a seeded synthetic corpus."""

from .aspect_head import classify, gather_anchors, joint_loss
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .checks import run_all_checks, run_end_to_end_check, run_primitive_checks
from .config import RunConfig, load_run_config, save_run_config
from .data import (
    Corpus,
    SyntheticSpec,
    compute_stats,
    generate_synthetic,
    load_corpus,
    save_corpus,
)
from .encoder import ModelConfig, average_attention, forward, init_params
from .metrics import MetricsReport, combined_score, score
from .numerics import Tape, Tensor, grad_check
from .optimizer import AdamState, adam_step, init_adam
from .tokenizer import (
    AcsaExample,
    AtsaExample,
    CategoryAspect,
    Polarity,
    TermAspect,
    Vocab,
    encode_baseline_single,
    encode_tmm_acsa,
    encode_tmm_atsa,
)
from .train import (
    build_vocab,
    compare,
    cue_localization_rate,
    encode_corpus,
    evaluate,
    predict_examples,
    run_training,
    train_single,
)

__version__ = "0.1.0"

__all__ = [
    "AcsaExample",
    "AdamState",
    "AtsaExample",
    "CategoryAspect",
    "Checkpoint",
    "Corpus",
    "MetricsReport",
    "ModelConfig",
    "Polarity",
    "RunConfig",
    "SyntheticSpec",
    "Tape",
    "Tensor",
    "TermAspect",
    "Vocab",
    "adam_step",
    "average_attention",
    "build_vocab",
    "classify",
    "combined_score",
    "compare",
    "compute_stats",
    "cue_localization_rate",
    "encode_baseline_single",
    "encode_corpus",
    "encode_tmm_acsa",
    "encode_tmm_atsa",
    "evaluate",
    "forward",
    "gather_anchors",
    "generate_synthetic",
    "grad_check",
    "init_adam",
    "init_params",
    "joint_loss",
    "load_checkpoint",
    "load_corpus",
    "load_run_config",
    "predict_examples",
    "run_all_checks",
    "run_end_to_end_check",
    "run_primitive_checks",
    "run_training",
    "save_checkpoint",
    "save_corpus",
    "save_run_config",
    "score",
    "train_single",
]
