"""Vocabulary and the three sequence schemes.

A sentence with m aspects becomes either one anchored sequence (all
aspects marked in place for ATSA, or appended as [AS]+category pairs
for ACSA) or m separate aspect+sentence pairs for the single-aspect
baseline.  Each aspect is later classified from the hidden state at its
anchor position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    AspectIndexOutOfRange,
    DuplicateCategory,
    EmptyCorpus,
    EmptyInput,
    IdOutOfRange,
    OverlappingSpans,
    ParseError,
    SequenceTooLong,
    SpanOutOfRange,
    UnknownCategory,
)

RESERVED = ("[PAD]", "[UNK]", "[AS]", "[AE]", "[CLS]", "[SEP]")
PAD_ID, UNK_ID, AS_ID, AE_ID, CLS_ID, SEP_ID = range(6)

CATEGORIES = (
    "food",
    "service",
    "staff",
    "price",
    "ambience",
    "menu",
    "place",
    "miscellaneous",
)

MAX_LEN = 128

SCHEME_TMM_ATSA = "tmm-atsa"
SCHEME_TMM_ACSA = "tmm-acsa"
SCHEME_BASELINE = "baseline-single"

_WORD_RE = re.compile(r"\w+|[^\w\s]")

_VOCAB_HEADER = "# tmm-absa vocab v1"


class Polarity(IntEnum):
    positive = 0
    neutral = 1
    negative = 2


def tokenize(text: str) -> list[str]:
    """Lowercase and split into words, with punctuation as separate tokens."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class TermAspect:
    """One aspect term: word span [start, end) plus its gold polarity.

    polarity may be None for prediction-time inputs without labels.
    """

    start: int
    end: int
    polarity: Polarity | None = None


@dataclass(frozen=True)
class CategoryAspect:
    """One aspect category from the fixed 8-way inventory."""

    category: str
    polarity: Polarity | None = None


@dataclass(frozen=True)
class AtsaExample:
    """A sentence with term-level aspects, kept sorted by span start."""

    tokens: tuple[str, ...]
    aspects: tuple[TermAspect, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise EmptyInput("AtsaExample: empty sentence")
        n = len(self.tokens)
        ordered = tuple(sorted(self.aspects, key=lambda a: (a.start, a.end)))
        object.__setattr__(self, "aspects", ordered)
        prev_end = 0
        for a in ordered:
            if not 0 <= a.start < a.end <= n:
                raise SpanOutOfRange(
                    f"span [{a.start}, {a.end}) outside sentence of {n} words"
                )
            if a.start < prev_end:
                raise OverlappingSpans(
                    f"span [{a.start}, {a.end}) overlaps a span ending at {prev_end}"
                )
            prev_end = a.end


@dataclass(frozen=True)
class AcsaExample:
    """A sentence with category-level aspects, in file order."""

    tokens: tuple[str, ...]
    aspects: tuple[CategoryAspect, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise EmptyInput("AcsaExample: empty sentence")
        seen: set[str] = set()
        for a in self.aspects:
            if a.category not in CATEGORIES:
                raise UnknownCategory(f"category {a.category!r} not in {CATEGORIES}")
            if a.category in seen:
                raise DuplicateCategory(f"category {a.category!r} listed twice")
            seen.add(a.category)


Example = AtsaExample | AcsaExample


@dataclass(frozen=True)
class EncodedSequence:
    """Token ids with per-aspect anchor positions and optional gold labels."""

    ids: tuple[int, ...]
    anchors: tuple[int, ...]
    gold: tuple[Polarity, ...] | None
    scheme: str


class Vocab:
    """Immutable token<->id map with a fixed 6-token reserved block."""

    def __init__(self, tokens: Sequence[str], min_frequency: int = 1) -> None:
        tokens = tuple(tokens)
        if tokens[: len(RESERVED)] != RESERVED:
            raise ParseError(f"vocabulary must start with the reserved block {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise ParseError("vocabulary contains duplicate tokens")
        self._tokens = tokens
        self._ids = {tok: i for i, tok in enumerate(tokens)}
        self.min_frequency = int(min_frequency)

    @classmethod
    def build(
        cls,
        corpus: Iterable[Sequence[str]],
        min_frequency: int = 1,
        extra: Sequence[str] = (),
    ) -> "Vocab":
        """Count tokens and assign ids 6.. in descending count, ties broken
        lexicographically.  `extra` tokens (e.g. category names) are always
        included even when absent from the corpus.
        """
        if min_frequency < 1:
            raise ValueError(f"min_frequency must be >= 1, got {min_frequency}")
        counts: dict[str, int] = {}
        seen_any = False
        for sent in corpus:
            seen_any = True
            for tok in sent:
                counts[tok] = counts.get(tok, 0) + 1
        if not seen_any:
            raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
        keep = {t: c for t, c in counts.items() if c >= min_frequency and t not in RESERVED}
        for t in extra:
            if t not in RESERVED:
                keep.setdefault(t, counts.get(t, 0))
        ordered = sorted(keep, key=lambda t: (-keep[t], t))
        return cls(RESERVED + tuple(ordered), min_frequency)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_for(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def ids_for(self, tokens: Sequence[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def token_for(self, idx: int) -> str:
        if not 0 <= idx < len(self._tokens):
            raise IdOutOfRange(f"id {idx} outside [0, {len(self._tokens)})")
        return self._tokens[idx]

    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def save(self, path: str | Path) -> None:
        lines = [f"{_VOCAB_HEADER} min_frequency={self.min_frequency}"]
        lines.extend(self._tokens)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith(_VOCAB_HEADER):
            raise ParseError(f"{path}: missing vocabulary header {_VOCAB_HEADER!r}")
        m = re.search(r"min_frequency=(\d+)", lines[0])
        if m is None:
            raise ParseError(f"{path}: header lacks min_frequency")
        return cls(lines[1:], int(m.group(1)))


def _gold_of(aspects: Sequence[TermAspect | CategoryAspect]) -> tuple[Polarity, ...] | None:
    if any(a.polarity is None for a in aspects):
        return None
    return tuple(a.polarity for a in aspects)


def _truncate(
    ids: list[int], anchors: list[int], regions: Sequence[tuple[int, int]], max_len: int
) -> list[int]:
    """Right-truncate to max_len; cutting into an [AS]..[AE] region or
    dropping an anchor is an error rather than a silent label loss."""
    if len(ids) <= max_len:
        return ids
    for as_pos, ae_pos in regions:
        if ae_pos >= max_len:
            raise SequenceTooLong(
                f"length {len(ids)} exceeds {max_len} and truncation would cut "
                f"the aspect region at [{as_pos}, {ae_pos}]"
            )
    if anchors and anchors[-1] >= max_len:
        raise SequenceTooLong(
            f"length {len(ids)} exceeds {max_len} and truncation would drop "
            f"the anchor at {anchors[-1]}"
        )
    return ids[:max_len]


def encode_tmm_atsa(
    example: AtsaExample, vocab: Vocab, max_len: int = MAX_LEN
) -> EncodedSequence:
    """Mark every aspect in place: [AS] before its first word, [AE] after
    its last.  Length is n + 2m; anchors are the [AS] positions."""
    ids: list[int] = []
    anchors: list[int] = []
    regions: list[tuple[int, int]] = []
    starts = {a.start: i for i, a in enumerate(example.aspects)}
    ends = {a.end for a in example.aspects}
    for w, tok in enumerate(example.tokens):
        if w in starts:
            anchors.append(len(ids))
            ids.append(AS_ID)
        ids.append(vocab.id_for(tok))
        if w + 1 in ends:
            ids.append(AE_ID)
            regions.append((anchors[-1], len(ids) - 1))
    ids = _truncate(ids, anchors, regions, max_len)
    return EncodedSequence(tuple(ids), tuple(anchors), _gold_of(example.aspects), SCHEME_TMM_ATSA)


def encode_tmm_acsa(
    example: AcsaExample, vocab: Vocab, max_len: int = MAX_LEN
) -> EncodedSequence:
    """Append [AS] plus the category token for each aspect after the
    sentence.  Anchors sit at n, n+2, ..., n+2(m-1)."""
    ids = vocab.ids_for(example.tokens)
    anchors: list[int] = []
    regions: list[tuple[int, int]] = []
    for a in example.aspects:
        if a.category not in vocab:
            raise UnknownCategory(
                f"category token {a.category!r} missing from the vocabulary; "
                "build the vocabulary with the category inventory included"
            )
        anchors.append(len(ids))
        ids.append(AS_ID)
        ids.append(vocab.id_for(a.category))
        regions.append((anchors[-1], len(ids) - 1))
    ids = _truncate(ids, anchors, regions, max_len)
    return EncodedSequence(tuple(ids), tuple(anchors), _gold_of(example.aspects), SCHEME_TMM_ACSA)


def encode_baseline_single(
    example: Example, aspect_index: int, vocab: Vocab, max_len: int = MAX_LEN
) -> EncodedSequence:
    """One aspect per sequence: [CLS] aspect [SEP] sentence [SEP], pooled
    at the [CLS] position."""
    if not 0 <= aspect_index < len(example.aspects):
        raise AspectIndexOutOfRange(
            f"aspect index {aspect_index} outside [0, {len(example.aspects)})"
        )
    aspect = example.aspects[aspect_index]
    if isinstance(aspect, TermAspect):
        aspect_tokens = example.tokens[aspect.start : aspect.end]
    else:
        aspect_tokens = (aspect.category,)
    ids = (
        [CLS_ID]
        + vocab.ids_for(aspect_tokens)
        + [SEP_ID]
        + vocab.ids_for(example.tokens)
        + [SEP_ID]
    )
    ids = _truncate(ids, [0], [], max_len)
    gold = None if aspect.polarity is None else (aspect.polarity,)
    return EncodedSequence(tuple(ids), (0,), gold, SCHEME_BASELINE)


def strip_to_sentence(encoded: EncodedSequence, vocab: Vocab) -> list[str]:
    """Recover the sentence tokens (OOV words come back as [UNK])."""
    ids = list(encoded.ids)
    if encoded.scheme == SCHEME_TMM_ATSA:
        ids = [i for i in ids if i not in (AS_ID, AE_ID)]
    elif encoded.scheme == SCHEME_TMM_ACSA:
        # appended aspect pairs are trailing ([AS], category) couples
        while len(ids) >= 2 and ids[-2] == AS_ID:
            ids = ids[:-2]
    elif encoded.scheme == SCHEME_BASELINE:
        first_sep = ids.index(SEP_ID)
        ids = ids[first_sep + 1 :]
        if ids and ids[-1] == SEP_ID:
            ids = ids[:-1]
    else:
        raise ParseError(f"unknown scheme tag {encoded.scheme!r}")
    return [vocab.token_for(i) for i in ids]


def atsa_word_positions(example: AtsaExample) -> list[int]:
    """Encoded index of each original word after [AS]/[AE] insertion."""
    out = []
    for w in range(len(example.tokens)):
        shift = 0
        for a in example.aspects:
            shift += (w >= a.start) + (w >= a.end)
        out.append(w + shift)
    return out


def acsa_word_positions(example: AcsaExample) -> list[int]:
    """Sentence words keep their positions; aspect pairs are appended."""
    return list(range(len(example.tokens)))


def baseline_word_positions(example: Example, aspect_index: int) -> list[int]:
    """Encoded index of each sentence word inside one baseline instance."""
    aspect = example.aspects[aspect_index]
    if isinstance(aspect, TermAspect):
        offset = 2 + (aspect.end - aspect.start)
    else:
        offset = 3
    return [w + offset for w in range(len(example.tokens))]
