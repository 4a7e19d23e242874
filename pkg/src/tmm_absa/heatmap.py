"""Attention heatmap export: a plain-text matrix and a self-contained
HTML page, both byte-deterministic for a given model and input."""

from __future__ import annotations

import html
from pathlib import Path

import numpy as np

from .errors import ParseError, ShapeMismatch
from .tokenizer import EncodedSequence, Vocab

MATRIX_HEADER = "# tmm-absa attn v1"


def _sequence_tokens(encoded: EncodedSequence, vocab: Vocab) -> list[str]:
    return [vocab.token_for(i) for i in encoded.ids]


def _check(encoded: EncodedSequence, weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    n = len(encoded.ids)
    if weights.shape != (n, n):
        raise ShapeMismatch(
            f"attention matrix {weights.shape} does not match sequence length {n}"
        )
    return weights


def format_attention_matrix(
    encoded: EncodedSequence, weights: np.ndarray, vocab: Vocab
) -> str:
    """Header, token row, then one full-precision row per query position."""
    weights = _check(encoded, weights)
    lines = [MATRIX_HEADER, " ".join(_sequence_tokens(encoded, vocab))]
    lines.extend(" ".join(f"{w:.17g}" for w in row) for row in weights)
    return "\n".join(lines) + "\n"


def save_attention_matrix(
    path: str | Path, encoded: EncodedSequence, weights: np.ndarray, vocab: Vocab
) -> None:
    Path(path).write_text(format_attention_matrix(encoded, weights, vocab), encoding="utf-8")


def _cell(token: str, weight: float, peak: float) -> str:
    # Opacity scales with the row maximum so every row has a visible peak.
    alpha = 0.0 if peak <= 0 else weight / peak
    return (
        f'<td style="background: rgba(178, 24, 43, {alpha:.3f})" '
        f'title="{weight:.6f}">{html.escape(token)}</td>'
    )


def render_attention_html(
    encoded: EncodedSequence, weights: np.ndarray, vocab: Vocab, title: str = "attention"
) -> str:
    """One row per anchor: how strongly that aspect attends to each token."""
    weights = _check(encoded, weights)
    tokens = _sequence_tokens(encoded, vocab)
    head = (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{html.escape(title)}</title>"
        "<style>table{border-collapse:collapse;font-family:monospace}"
        "td,th{border:1px solid #999;padding:2px 6px;text-align:center}</style>"
        "</head><body>\n"
        f"<h1>{html.escape(title)}</h1>\n<table>\n"
    )
    header_cells = "".join(f"<th>{html.escape(t)}</th>" for t in tokens)
    rows = [f"<tr><th></th>{header_cells}</tr>"]
    for k, anchor in enumerate(encoded.anchors):
        row = weights[anchor]
        peak = float(row.max(initial=0.0))
        label = f"aspect {k} @ {anchor}"
        cells = "".join(_cell(t, float(w), peak) for t, w in zip(tokens, row))
        rows.append(f"<tr><th>{html.escape(label)}</th>{cells}</tr>")
    return head + "\n".join(rows) + "\n</table>\n</body></html>\n"


def save_attention_html(
    path: str | Path,
    encoded: EncodedSequence,
    weights: np.ndarray,
    vocab: Vocab,
    title: str = "attention",
) -> None:
    Path(path).write_text(
        render_attention_html(encoded, weights, vocab, title), encoding="utf-8"
    )


def parse_attention_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Inverse of save_attention_matrix, for round-trip checks."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MATRIX_HEADER:
        raise ParseError(f"missing attention header {MATRIX_HEADER!r}")
    tokens = lines[1].split(" ")
    matrix = np.array([[float(v) for v in line.split(" ")] for line in lines[2:]])
    if matrix.shape != (len(tokens), len(tokens)):
        raise ParseError(
            f"matrix shape {matrix.shape} does not match {len(tokens)} tokens"
        )
    return tokens, matrix
