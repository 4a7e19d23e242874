"""Self-describing binary checkpoints.

Byte layout, stable across releases:

    bytes 0..7    magic b"TMMCKPT1"
    bytes 8..11   header length N, unsigned 32-bit little-endian
    bytes 12..12+N  header: UTF-8 JSON with sorted keys
    remainder     the arrays named in the header, concatenated in header
                  order, each as raw little-endian float64, C order

The header carries the model configuration, the full vocabulary, the
training metadata, and the array index (name + shape), so a checkpoint
loads without any external file.  Serialization is deterministic:
saving a loaded checkpoint reproduces the input byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import ModelConfig, Params, validate_params
from .errors import ParseError, ShapeMismatch
from .numerics import Tensor
from .optimizer import AdamState
from .tokenizer import Vocab

MAGIC = b"TMMCKPT1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: Params
    config: ModelConfig
    vocab: Vocab
    metadata: dict
    adam: AdamState | None = None


def _config_to_dict(config: ModelConfig) -> dict:
    return {
        "vocab_size": config.vocab_size,
        "layers": config.layers,
        "heads": config.heads,
        "hidden": config.hidden,
        "ffn": config.ffn,
        "max_len": config.max_len,
        "dropout": config.dropout,
        "classes": config.classes,
        "ln_eps": config.ln_eps,
    }


def _array_index(arrays: dict[str, np.ndarray]) -> list[dict]:
    return [{"name": k, "shape": list(arrays[k].shape)} for k in sorted(arrays)]


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    arrays = {name: t.data for name, t in checkpoint.params.items()}
    header: dict = {
        "format_version": FORMAT_VERSION,
        "config": _config_to_dict(checkpoint.config),
        "vocab": {
            "tokens": list(checkpoint.vocab.tokens()),
            "min_frequency": checkpoint.vocab.min_frequency,
        },
        "metadata": checkpoint.metadata,
        "arrays": _array_index(arrays),
    }
    payload = [arrays[e["name"]] for e in header["arrays"]]
    if checkpoint.adam is not None:
        adam = checkpoint.adam
        moments = {f"m.{k}": v for k, v in adam.m.items()}
        moments.update({f"v.{k}": v for k, v in adam.v.items()})
        header["adam"] = {
            "alpha": adam.alpha,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "clip_norm": adam.clip_norm,
            "t": adam.t,
            "arrays": _array_index(moments),
        }
        payload.extend(moments[e["name"]] for e in header["adam"]["arrays"])
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in payload:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_arrays(buf: bytes, offset: int, index: list[dict]) -> tuple[dict[str, np.ndarray], int]:
    out = {}
    for entry in index:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(buf):
            raise ParseError(
                f"checkpoint truncated: array {entry['name']} needs {nbytes} bytes"
            )
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=offset)
        out[entry["name"]] = arr.astype(np.float64).reshape(shape)
        offset += nbytes
    return out, offset


def load_checkpoint(path: str | Path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: bad magic, not a checkpoint file")
    (header_len,) = struct.unpack_from("<I", buf, len(MAGIC))
    start = len(MAGIC) + 4
    try:
        header = json.loads(buf[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: unreadable header ({e})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ParseError(
            f"{path}: format version {header.get('format_version')} "
            f"unsupported (expected {FORMAT_VERSION})"
        )
    config = ModelConfig(**header["config"])
    vocab = Vocab(header["vocab"]["tokens"], header["vocab"]["min_frequency"])
    offset = start + header_len
    raw, offset = _read_arrays(buf, offset, header["arrays"])
    params = {name: Tensor(arr) for name, arr in raw.items()}
    validate_params(params, config)
    adam = None
    if header.get("adam") is not None:
        a = header["adam"]
        moments, offset = _read_arrays(buf, offset, a["arrays"])
        m_arrays = {k[2:]: arr for k, arr in moments.items() if k.startswith("m.")}
        v_arrays = {k[2:]: arr for k, arr in moments.items() if k.startswith("v.")}
        if set(m_arrays) != set(params) or set(v_arrays) != set(params):
            raise ShapeMismatch("optimizer moment names do not match the parameters")
        adam = AdamState(
            alpha=a["alpha"],
            beta1=a["beta1"],
            beta2=a["beta2"],
            eps=a["eps"],
            clip_norm=a["clip_norm"],
            t=a["t"],
            m=m_arrays,
            v=v_arrays,
        )
    if offset != len(buf):
        raise ParseError(f"{path}: {len(buf) - offset} trailing bytes after arrays")
    return Checkpoint(params, config, vocab, header["metadata"], adam)
