"""Dense float64 arrays with reverse-mode differentiation.

A Tape is a Wengert list: every primitive appends the backward rule for
the value it produced, and replaying the list in reverse accumulates
exactly one gradient contribution per use of each tensor.  Kept small
and auditable on purpose: ranks 1-3 only, float64 only, and the sole
broadcast is row-vector bias addition.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import erf

from .errors import (
    IdOutOfRange,
    NonDeterministicFunction,
    NonFiniteInput,
    ShapeMismatch,
)

PROB_CLIP = 1e-12

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Rank 1-3 float64 array with an optional accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data) -> None:
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not 1 <= arr.ndim <= 3:
            raise ShapeMismatch(f"tensor rank {arr.ndim} outside supported range 1-3")
        if arr.size == 0:
            raise ShapeMismatch("zero-size tensors are not supported")
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Tensor(shape={self.shape})"


class Record(NamedTuple):
    """One executed primitive: its tag and the captured backward rule."""

    op: str
    backward: Callable[[], None]


class Tape:
    """Ordered record of executed primitives for one forward pass."""

    _active: "Tape | None" = None

    def __init__(self) -> None:
        self._records: list[Record] = []

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise RuntimeError("a Tape is already active")
        Tape._active = self
        return self

    def __exit__(self, *exc) -> bool:
        Tape._active = None
        return False

    @staticmethod
    def active() -> "Tape | None":
        return Tape._active

    def __len__(self) -> int:
        return len(self._records)

    def ops(self) -> list[str]:
        return [r.op for r in self._records]

    def backward(self, out: Tensor) -> None:
        """Seed d(out)/d(out) = 1 and replay all records in reverse."""
        if out.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar output, got {out.shape}")
        out.accumulate(np.ones_like(out.data))
        for rec in reversed(self._records):
            rec.backward()


def _record(op: str, out: Tensor, backward: Callable[[np.ndarray], None]) -> None:
    tape = Tape.active()
    if tape is None:
        return

    def step() -> None:
        g = out.grad
        if g is not None:
            backward(g)

    tape._records.append(Record(op, step))


def _require_rank(t: Tensor, rank: int, op: str) -> None:
    if t.data.ndim != rank:
        raise ShapeMismatch(f"{op}: expected rank-{rank} tensor, got shape {t.shape}")


# --- primitives ---------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product [m x k] @ [k x n]; backward dA = G B^T, dB = A^T G."""
    _require_rank(a, 2, "matmul")
    _require_rank(b, 2, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)

    def backward(g: np.ndarray) -> None:
        a.accumulate(g @ bd.T)
        b.accumulate(ad.T @ g)

    _record("matmul", out, backward)
    return out


def transpose(x: Tensor) -> Tensor:
    _require_rank(x, 2, "transpose")
    out = Tensor(x.data.T)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g.T)

    _record("transpose", out, backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; the only broadcast is [m x n] + [n] (row-vector bias)."""
    if a.shape == b.shape:
        out = Tensor(a.data + b.data)

        def backward(g: np.ndarray) -> None:
            a.accumulate(g)
            b.accumulate(g)

    elif a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        out = Tensor(a.data + b.data[None, :])

        def backward(g: np.ndarray) -> None:
            a.accumulate(g)
            b.accumulate(g.sum(axis=0))

    else:
        raise ShapeMismatch(f"add: incompatible shapes {a.shape} and {b.shape}")
    _record("add", out, backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul: shapes differ, {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * bd)
        b.accumulate(g * ad)

    _record("mul", out, backward)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * c)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * c)

    _record("scale", out, backward)
    return out


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) gelu: x * Phi(x)."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    out = Tensor(xd * cdf)

    def backward(g: np.ndarray) -> None:
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI
        x.accumulate(g * (cdf + xd * pdf))

    _record("gelu", out, backward)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row softmax with max-shift; rows of the output sum to 1."""
    _require_rank(x, 2, "softmax_rows")
    if not np.isfinite(x.data).all():
        raise NonFiniteInput("softmax_rows: input contains NaN or Inf")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p)

    def backward(g: np.ndarray) -> None:
        # softmax Jacobian applied to g: p * (g - <g, p> per row)
        x.accumulate(p * (g - (g * p).sum(axis=1, keepdims=True)))

    _record("softmax_rows", out, backward)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each row (population variance + eps), then scale and shift."""
    _require_rank(x, 2, "layer_norm")
    _require_rank(gain, 1, "layer_norm")
    _require_rank(bias, 1, "layer_norm")
    d = x.shape[1]
    if gain.shape[0] != d or bias.shape[0] != d:
        raise ShapeMismatch(
            f"layer_norm: gain/bias {gain.shape}/{bias.shape} do not match width {d}"
        )
    if eps <= 0:
        raise ValueError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = xc * ivar
    out = Tensor(xhat * gain.data[None, :] + bias.data[None, :])

    def backward(g: np.ndarray) -> None:
        dxhat = g * gain.data[None, :]
        s1 = dxhat.sum(axis=1, keepdims=True)
        s2 = (dxhat * xhat).sum(axis=1, keepdims=True)
        x.accumulate((ivar / d) * (d * dxhat - s1 - xhat * s2))
        gain.accumulate((g * xhat).sum(axis=0))
        bias.accumulate(g.sum(axis=0))

    _record("layer_norm", out, backward)
    return out


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Row gather: out[i] = table[ids[i]] (token lookup, anchor pooling)."""
    _require_rank(table, 2, "embedding_lookup")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeMismatch("embedding_lookup: ids must be a non-empty 1-d sequence")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise IdOutOfRange(
            f"embedding_lookup: ids outside [0, {table.shape[0]}): "
            f"min={idx.min()} max={idx.max()}"
        )
    out = Tensor(table.data[idx])

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(table.data)
        np.add.at(acc, idx, g)
        table.accumulate(acc)

    _record("embedding_lookup", out, backward)
    return out


def dropout(x: Tensor, p: float, seed: int, train: bool = True) -> Tensor:
    """Seeded inverted dropout; the recorded mask is reused by backward.

    Identity (the input tensor itself) in eval mode or at p == 0.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * mask)

    _record("dropout", out, backward)
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack rank-2 blocks vertically; backward splits the gradient back."""
    if not parts:
        raise ShapeMismatch("concat_rows: need at least one block")
    widths = set()
    for t in parts:
        _require_rank(t, 2, "concat_rows")
        widths.add(t.shape[1])
    if len(widths) != 1:
        raise ShapeMismatch(f"concat_rows: column counts differ: {sorted(widths)}")
    out = Tensor(np.concatenate([t.data for t in parts], axis=0))
    offsets = np.cumsum([0] + [t.shape[0] for t in parts])

    def backward(g: np.ndarray) -> None:
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            t.accumulate(g[lo:hi])

    _record("concat_rows", out, backward)
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Stack rank-2 blocks horizontally (multi-head merge)."""
    if not parts:
        raise ShapeMismatch("concat_cols: need at least one block")
    heights = set()
    for t in parts:
        _require_rank(t, 2, "concat_cols")
        heights.add(t.shape[0])
    if len(heights) != 1:
        raise ShapeMismatch(f"concat_cols: row counts differ: {sorted(heights)}")
    out = Tensor(np.concatenate([t.data for t in parts], axis=1))
    offsets = np.cumsum([0] + [t.shape[1] for t in parts])

    def backward(g: np.ndarray) -> None:
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            t.accumulate(g[:, lo:hi])

    _record("concat_cols", out, backward)
    return out


def _check_slice(limit: int, start: int, stop: int, op: str) -> None:
    if not (0 <= start < stop <= limit):
        raise ShapeMismatch(f"{op}: invalid range [{start}, {stop}) for extent {limit}")


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    _require_rank(x, 2, "slice_rows")
    _check_slice(x.shape[0], start, stop, "slice_rows")
    out = Tensor(x.data[start:stop].copy())

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(x.data)
        acc[start:stop] = g
        x.accumulate(acc)

    _record("slice_rows", out, backward)
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _require_rank(x, 2, "slice_cols")
    _check_slice(x.shape[1], start, stop, "slice_cols")
    out = Tensor(x.data[:, start:stop].copy())

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(x.data)
        acc[:, start:stop] = g
        x.accumulate(acc)

    _record("slice_cols", out, backward)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries as a shape-(1,) tensor."""
    out = Tensor(np.array([x.data.sum()]))

    def backward(g: np.ndarray) -> None:
        x.accumulate(np.full_like(x.data, g[0]))

    _record("sum_all", out, backward)
    return out


def nll_sum(probs: Tensor, targets: Sequence[int], clip: float = PROB_CLIP) -> Tensor:
    """Sum over rows of -log(probs[i, targets[i]]), clipping below `clip`.

    Rows whose picked probability fell below the clip get zero gradient
    (the clipped log is locally constant there).
    """
    _require_rank(probs, 2, "nll_sum")
    idx = np.asarray(targets, dtype=np.int64)
    if idx.ndim != 1 or idx.shape[0] != probs.shape[0]:
        raise ShapeMismatch(
            f"nll_sum: {idx.shape[0] if idx.ndim == 1 else '?'} targets "
            f"for {probs.shape[0]} rows"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= probs.shape[1]):
        raise IdOutOfRange(f"nll_sum: target outside [0, {probs.shape[1]})")
    rows = np.arange(idx.shape[0])
    picked = probs.data[rows, idx]
    clipped = np.maximum(picked, clip)
    out = Tensor(np.array([-np.log(clipped).sum()]))

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(probs.data)
        acc[rows, idx] = np.where(picked >= clip, -1.0 / clipped, 0.0) * g[0]
        probs.accumulate(acc)

    _record("nll_sum", out, backward)
    return out


# --- finite-difference gradient checking --------------------------------------


def grad_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Compare the taped gradient of a scalar function against central
    finite differences over every coordinate of every input.

    Returns max over coordinates of |numeric - analytic| / max(1, |analytic|).
    Raises NonDeterministicFunction if two evaluations at the same point
    differ bitwise.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValueError(f"grad_check: h={h} outside [1e-7, 1e-4]")

    def value() -> float:
        return f(inputs).item()

    v1, v2 = value(), value()
    if v1 != v2:
        raise NonDeterministicFunction(
            f"two evaluations at identical input differ: {v1!r} vs {v2!r}"
        )

    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        out = f(inputs)
        tape.backward(out)

    max_rel = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        aflat = analytic.reshape(-1)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = value()
            flat[i] = orig - h
            fm = value()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            rel = abs(numeric - aflat[i]) / max(1.0, abs(aflat[i]))
            max_rel = max(max_rel, rel)
    return max_rel
