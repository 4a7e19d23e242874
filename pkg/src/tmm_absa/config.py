"""Run configuration: a flat key=value file with fail-fast parsing.

Unknown keys are errors so a typo cannot silently fall back to a
default.  The same dataclass drives training, evaluation, and the
scheme comparison; CLI flags override individual fields.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .data import TASKS
from .encoder import ModelConfig
from .errors import ConfigError

SCHEMES = ("tmm", "baseline-single")

# accepted on the command line and in files as a shorthand
SCHEME_ALIASES = {"baseline": "baseline-single"}


@dataclass(frozen=True)
class RunConfig:
    task: str = "atsa"
    scheme: str = "tmm"
    layers: int = 2
    heads: int = 4
    hidden: int = 64
    ffn: int = 256
    max_len: int = 128
    dropout: float = 0.1
    min_frequency: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    batch_size: int = 32
    epochs: int = 50
    patience: int = 5
    seed: int = 7
    runs: int = 3
    loss_reduction: str = "mean"
    data_dir: str = "data"
    out_dir: str = "out"

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        scheme = SCHEME_ALIASES.get(self.scheme, self.scheme)
        object.__setattr__(self, "scheme", scheme)
        if scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.loss_reduction not in ("mean", "sum"):
            raise ConfigError("loss_reduction must be 'mean' or 'sum'")

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            layers=self.layers,
            heads=self.heads,
            hidden=self.hidden,
            ffn=self.ffn,
            max_len=self.max_len,
            dropout=self.dropout,
        )

    def data_path(self, split: str) -> Path:
        return Path(self.data_dir) / f"{self.task}-{split}.records"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key == "clip_norm":
        return None if raw.lower() == "none" else float(raw)
    ftype = _FIELD_TYPES[key]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"key {key}: cannot parse {raw!r} as {ftype}") from None


def load_run_config(path: str | Path, **overrides) -> RunConfig:
    """Parse key=value lines; '#' starts a comment, blank lines are fine."""
    values: dict = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path} line {line_no}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path} line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path} line {line_no}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def save_run_config(config: RunConfig, path: str | Path) -> None:
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        lines.append(f"{f.name} = {'none' if value is None else value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def with_overrides(config: RunConfig, **kw) -> RunConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
