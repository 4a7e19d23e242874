"""Multi-layer pre-norm transformer encoder over one unpadded sequence.

Sequences are processed one at a time (batching is loop-level in the
trainer), which keeps attention free of padding masks.  Every forward
records each layer's per-head attention matrix so aspect anchors can be
inspected after training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nm
from .errors import IdOutOfRange, LayerOutOfRange, SequenceTooLong, ShapeMismatch
from .numerics import Tensor

Params = dict[str, Tensor]

TRAIN, EVAL = "train", "eval"

# one dropout site per stochastic point; the per-site seed also folds in
# the layer and head indices so no two masks share a stream
_SITE_EMBED, _SITE_ATTN_PROBS, _SITE_ATTN_OUT, _SITE_FFN_OUT = range(4)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    layers: int = 2
    heads: int = 4
    hidden: int = 64
    ffn: int = 256
    max_len: int = 128
    dropout: float = 0.1
    classes: int = 3
    ln_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.hidden % self.heads != 0:
            raise ShapeMismatch(
                f"hidden {self.hidden} not divisible by heads {self.heads}"
            )
        if min(self.vocab_size, self.heads, self.hidden, self.ffn, self.max_len) < 1:
            raise ShapeMismatch("all model dimensions must be >= 1")
        if self.layers < 0:
            raise ShapeMismatch("layer count must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ShapeMismatch(f"dropout {self.dropout} outside [0, 1)")
        if self.classes != 3:
            raise ShapeMismatch("the classifier is fixed to the 3 polarity classes")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter inventory, in a fixed deterministic order."""
    d, f = config.hidden, config.ffn
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, d),
        "pos_emb": (config.max_len, d),
    }
    for i in range(config.layers):
        p = f"layer{i}"
        shapes[f"{p}.attn_norm.gain"] = (d,)
        shapes[f"{p}.attn_norm.bias"] = (d,)
        for proj in ("q", "k", "v", "o"):
            shapes[f"{p}.{proj}.w"] = (d, d)
            shapes[f"{p}.{proj}.b"] = (d,)
        shapes[f"{p}.ffn_norm.gain"] = (d,)
        shapes[f"{p}.ffn_norm.bias"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d)
        shapes[f"{p}.ffn.b2"] = (d,)
    shapes["final_norm.gain"] = (d,)
    shapes["final_norm.bias"] = (d,)
    shapes["cls.w"] = (d, config.classes)
    shapes["cls.b"] = (config.classes,)
    return shapes


def init_params(config: ModelConfig, seed: int) -> Params:
    """normal(0, 0.02) weights, zero biases, unit layer-norm gains."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: Params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gain"):
            arr = np.ones(shape)
        elif name.endswith((".b", ".b1", ".b2", ".bias")) or name == "cls.b":
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        params[name] = Tensor(arr)
    return params


def validate_params(params: Params, config: ModelConfig) -> None:
    want = param_shapes(config)
    if set(params) != set(want):
        missing = sorted(set(want) - set(params))
        extra = sorted(set(params) - set(want))
        raise ShapeMismatch(f"parameter names differ: missing={missing} extra={extra}")
    for name, shape in want.items():
        if params[name].shape != shape:
            raise ShapeMismatch(
                f"{name}: expected shape {shape}, got {params[name].shape}"
            )


@dataclass
class AttentionRecord:
    """Per layer, per head: the row-stochastic [T x T] attention weights
    captured before attention dropout."""

    matrices: list[list[np.ndarray]]

    @property
    def layers(self) -> int:
        return len(self.matrices)


def _site_seed(seed: int, *site: int) -> int:
    return int(np.random.SeedSequence([seed, *site]).generate_state(1)[0])


def _linear(x: Tensor, params: Params, name: str) -> Tensor:
    return nm.add(nm.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def forward(
    ids: Sequence[int],
    params: Params,
    config: ModelConfig,
    mode: str = EVAL,
    seed: int = 0,
) -> tuple[Tensor, AttentionRecord]:
    """Encode one sequence; returns final hidden states [T x d] and the
    captured attention.  Eval mode is deterministic and dropout-free."""
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"mode must be {TRAIN!r} or {EVAL!r}, got {mode!r}")
    ids = list(ids)
    t = len(ids)
    if t == 0:
        raise ShapeMismatch("cannot encode an empty sequence")
    if t > config.max_len:
        raise SequenceTooLong(f"sequence length {t} exceeds max_len {config.max_len}")
    if min(ids) < 0 or max(ids) >= config.vocab_size:
        raise IdOutOfRange(
            f"token ids outside [0, {config.vocab_size}): min={min(ids)} max={max(ids)}"
        )
    train = mode == TRAIN
    p = config.dropout

    def drop(x: Tensor, *site: int) -> Tensor:
        if not train or p == 0.0:
            return x
        return nm.dropout(x, p, _site_seed(seed, *site), train=True)

    tok = nm.embedding_lookup(params["tok_emb"], ids)
    pos = nm.embedding_lookup(params["pos_emb"], list(range(t)))
    h = drop(nm.add(tok, pos), _SITE_EMBED, 0, 0)

    dk = config.head_dim
    inv_sqrt_dk = 1.0 / math.sqrt(dk)
    record = AttentionRecord([[] for _ in range(config.layers)])
    for layer in range(config.layers):
        prefix = f"layer{layer}"
        a = nm.layer_norm(
            h, params[f"{prefix}.attn_norm.gain"], params[f"{prefix}.attn_norm.bias"],
            config.ln_eps,
        )
        q = _linear(a, params, f"{prefix}.q")
        k = _linear(a, params, f"{prefix}.k")
        v = _linear(a, params, f"{prefix}.v")
        contexts = []
        for head in range(config.heads):
            lo, hi = head * dk, (head + 1) * dk
            qh, kh, vh = (nm.slice_cols(x, lo, hi) for x in (q, k, v))
            scores = nm.scale(nm.matmul(qh, nm.transpose(kh)), inv_sqrt_dk)
            probs = nm.softmax_rows(scores)
            record.matrices[layer].append(probs.data.copy())
            probs = drop(probs, _SITE_ATTN_PROBS, layer, head)
            contexts.append(nm.matmul(probs, vh))
        ctx = contexts[0] if config.heads == 1 else nm.concat_cols(contexts)
        attn_out = drop(_linear(ctx, params, f"{prefix}.o"), _SITE_ATTN_OUT, layer, 0)
        h = nm.add(h, attn_out)

        f = nm.layer_norm(
            h, params[f"{prefix}.ffn_norm.gain"], params[f"{prefix}.ffn_norm.bias"],
            config.ln_eps,
        )
        f = nm.add(nm.matmul(f, params[f"{prefix}.ffn.w1"]), params[f"{prefix}.ffn.b1"])
        f = nm.gelu(f)
        f = nm.add(nm.matmul(f, params[f"{prefix}.ffn.w2"]), params[f"{prefix}.ffn.b2"])
        f = drop(f, _SITE_FFN_OUT, layer, 0)
        h = nm.add(h, f)

    hidden = nm.layer_norm(
        h, params["final_norm.gain"], params["final_norm.bias"], config.ln_eps
    )
    return hidden, record


def average_attention(record: AttentionRecord, layer: int | str = "all") -> np.ndarray:
    """Head-averaged attention for one layer, or over all layers."""
    if record.layers == 0:
        raise LayerOutOfRange("the attention record holds no layers")
    if layer == "all":
        selected = [m for heads in record.matrices for m in heads]
    else:
        if not isinstance(layer, int) or not 0 <= layer < record.layers:
            raise LayerOutOfRange(
                f"layer {layer!r} outside [0, {record.layers}) and not 'all'"
            )
        selected = record.matrices[layer]
    return np.mean(selected, axis=0)
