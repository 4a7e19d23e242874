"""Attention artifact tests: matrix round trip and HTML rendering."""

import numpy as np
import pytest

from tmm_absa.encoder import EVAL, ModelConfig, average_attention, forward, init_params
from tmm_absa.errors import ParseError, ShapeMismatch
from tmm_absa.heatmap import (
    MATRIX_HEADER,
    format_attention_matrix,
    parse_attention_matrix,
    render_attention_html,
    save_attention_html,
    save_attention_matrix,
)
from tmm_absa.tokenizer import AtsaExample, TermAspect, Vocab, encode_tmm_atsa

SENTENCE = ("the", "salmon", "is", "tasty", "but", "the", "waiter", "was", "rude")


@pytest.fixture(scope="module")
def setup():
    vocab = Vocab.build([SENTENCE])
    example = AtsaExample(
        tokens=SENTENCE,
        aspects=(TermAspect(1, 2, None), TermAspect(6, 7, None)),
    )
    encoded = encode_tmm_atsa(example, vocab)
    config = ModelConfig(vocab_size=len(vocab), layers=1, heads=1, hidden=8, ffn=16)
    params = init_params(config, 0)
    _, record = forward(encoded.ids, params, config, mode=EVAL)
    return vocab, encoded, record


def test_single_head_average_is_raw_matrix(setup):
    vocab, encoded, record = setup
    avg = average_attention(record, 0)
    assert np.array_equal(avg, record.matrices[0][0])


def test_matrix_file_round_trip(tmp_path, setup):
    vocab, encoded, record = setup
    avg = average_attention(record, "all")
    path = tmp_path / "attn.txt"
    save_attention_matrix(path, encoded, avg, vocab)
    text = path.read_text()
    assert text.startswith(MATRIX_HEADER + "\n")
    tokens, matrix = parse_attention_matrix(path)
    assert tokens == [vocab.token_for(i) for i in encoded.ids]
    assert np.array_equal(matrix, avg)  # %.17g is lossless for float64


def test_matrix_rows_sum_to_one(setup):
    _, encoded, record = setup
    avg = average_attention(record, "all")
    assert np.allclose(avg.sum(axis=1), 1.0, atol=1e-9)


def test_rendering_is_deterministic(tmp_path, setup):
    vocab, encoded, record = setup
    avg = average_attention(record, "all")
    a = tmp_path / "a.html"
    b = tmp_path / "b.html"
    save_attention_html(a, encoded, avg, vocab)
    save_attention_html(b, encoded, avg, vocab)
    assert a.read_bytes() == b.read_bytes()
    assert (
        format_attention_matrix(encoded, avg, vocab)
        == format_attention_matrix(encoded, avg, vocab)
    )


def test_html_has_one_row_per_anchor_and_escapes(setup):
    vocab, encoded, record = setup
    avg = average_attention(record, "all")
    html_text = render_attention_html(encoded, avg, vocab, title="<q&a>")
    assert html_text.count("<tr><th>aspect ") == len(encoded.anchors)
    assert "&lt;q&amp;a&gt;" in html_text
    assert "<q&a>" not in html_text
    assert "[AS]" in html_text  # marker tokens visible as cells


def test_wrong_shape_rejected(setup):
    vocab, encoded, _ = setup
    with pytest.raises(ShapeMismatch):
        format_attention_matrix(encoded, np.ones((3, 3)), vocab)


def test_parse_rejects_missing_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a header\n1 2\n")
    with pytest.raises(ParseError):
        parse_attention_matrix(path)
