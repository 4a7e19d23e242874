"""Corpus I/O, statistics, and a seeded synthetic corpus generator.

The on-disk format is one JSON record per line under a version header.
The generator builds multi-aspect multi-sentiment sentences from a
clause grammar whose gold labels are fully determined by cue-adjective
adjacency, so a syntax-reading oracle scores 100% and any model
shortfall is the model's fault.  A configurable fraction of sentences
carries a cross-aspect distractor: a cue of the wrong polarity placed
prenominally next to some aspect.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyCorpus,
    InfeasibleSpec,
    ParseError,
    SpanMismatch,
    TaskMismatch,
    UnknownCategory,
    UnlabeledAspect,
    ValidationError,
)
from .tokenizer import (
    CATEGORIES,
    AcsaExample,
    AtsaExample,
    CategoryAspect,
    Example,
    Polarity,
    TermAspect,
    tokenize,
)

FORMAT_HEADER = "# tmm-absa v1"

TASKS = ("atsa", "acsa")
SPLITS = ("train", "dev", "test")

_ATSA_KEYS = {"term", "from", "to", "polarity"}
_ACSA_KEYS = {"category", "polarity"}
_RECORD_KEYS = {"text", "task", "aspects"}


@dataclass(frozen=True)
class Provenance:
    path: str
    format_version: str


@dataclass(frozen=True)
class Corpus:
    task: str
    split: str
    examples: tuple[Example, ...]
    provenance: Provenance = field(compare=False)
    multi_sentiment_warnings: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise TaskMismatch(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.split not in SPLITS:
            raise ParseError(f"unknown split {self.split!r}, expected one of {SPLITS}")
        if not self.examples:
            raise EmptyCorpus(f"{self.split} corpus has no examples")

    def __len__(self) -> int:
        return len(self.examples)


@dataclass(frozen=True)
class CorpusStats:
    sentences: int
    aspects: int
    average: float
    polarity_counts: tuple[int, int, int]  # positive, neutral, negative

    def display(self) -> str:
        pos, neu, neg = self.polarity_counts
        return (
            f"Sen. {self.sentences}  Asp. {self.aspects}  Ave. {self.average:.2f}  "
            f"Pos. {pos}  Neu. {neu}  Neg. {neg}"
        )


def _violates_multi_sentiment(example: Example) -> bool:
    polarities = {a.polarity for a in example.aspects}
    return len(example.aspects) < 2 or len(polarities - {None}) < 2


def _parse_polarity(value, line_no: int, allow_unlabeled: bool) -> Polarity | None:
    if value is None:
        if allow_unlabeled:
            return None
        raise ParseError(f"line {line_no}: aspect is missing its polarity")
    if value not in Polarity.__members__:
        raise ParseError(f"line {line_no}: unknown polarity {value!r}")
    return Polarity[value]


def _parse_aspect(obj: dict, tokens: tuple[str, ...], task: str, line_no: int, allow_unlabeled: bool):
    if not isinstance(obj, dict):
        raise ParseError(f"line {line_no}: aspect entry is not an object")
    keys = set(obj)
    polarity = _parse_polarity(obj.get("polarity"), line_no, allow_unlabeled)
    if task == "atsa":
        if not keys <= _ATSA_KEYS or not {"term", "from", "to"} <= keys:
            raise ParseError(f"line {line_no}: ATSA aspect needs term/from/to, got {sorted(keys)}")
        start, stop = obj["from"], obj["to"]
        if not (isinstance(start, int) and isinstance(stop, int)):
            raise ParseError(f"line {line_no}: from/to must be integers")
        if tokenize(obj["term"]) != list(tokens[start:stop]):
            raise SpanMismatch(
                f"line {line_no}: term {obj['term']!r} does not match span "
                f"[{start}, {stop}) = {list(tokens[start:stop])!r}"
            )
        return TermAspect(start, stop, polarity)
    if not keys <= _ACSA_KEYS or "category" not in keys:
        raise ParseError(f"line {line_no}: ACSA aspect needs category, got {sorted(keys)}")
    return CategoryAspect(obj["category"], polarity)


def load_corpus(
    path: str | Path,
    task: str,
    split: str = "train",
    allow_unlabeled: bool = False,
) -> Corpus:
    """Parse a record file; invalid lines fail with their line number.

    Examples violating the multi-aspect multi-sentiment property
    (fewer than two aspects or uniform polarity) are counted and
    reported as one summary warning, not rejected.
    """
    if task not in TASKS:
        raise TaskMismatch(f"unknown task {task!r}, expected one of {TASKS}")
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ParseError(f"{path}: first line must be the header {FORMAT_HEADER!r}")
    examples: list[Example] = []
    violations = 0
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"line {line_no}: invalid JSON ({e.msg})") from None
        if not isinstance(record, dict) or set(record) != _RECORD_KEYS:
            raise ParseError(
                f"line {line_no}: record must have exactly the fields "
                f"{sorted(_RECORD_KEYS)}"
            )
        if record["task"] != task:
            raise TaskMismatch(f"line {line_no}: record task {record['task']!r} != {task!r}")
        tokens = tuple(tokenize(record["text"]))
        if not isinstance(record["aspects"], list):
            raise ParseError(f"line {line_no}: aspects must be an array")
        aspects = tuple(
            _parse_aspect(a, tokens, task, line_no, allow_unlabeled)
            for a in record["aspects"]
        )
        try:
            example: Example
            if task == "atsa":
                example = AtsaExample(tokens, aspects)
            else:
                example = AcsaExample(tokens, aspects)
        except ValidationError as e:
            raise type(e)(f"line {line_no}: {e}") from None
        if _violates_multi_sentiment(example):
            violations += 1
        examples.append(example)
    if not examples:
        raise EmptyCorpus(f"{path}: no records after the header")
    if violations:
        warnings.warn(
            f"{path}: {violations} example(s) violate the multi-aspect "
            "multi-sentiment property (fewer than 2 aspects or uniform polarity)",
            UserWarning,
            stacklevel=2,
        )
    return Corpus(task, split, tuple(examples), Provenance(str(path), FORMAT_HEADER), violations)


def _aspect_to_obj(aspect, tokens: tuple[str, ...]) -> dict:
    if isinstance(aspect, TermAspect):
        obj = {
            "term": " ".join(tokens[aspect.start : aspect.end]),
            "from": aspect.start,
            "to": aspect.end,
        }
    else:
        obj = {"category": aspect.category}
    if aspect.polarity is not None:
        obj["polarity"] = aspect.polarity.name
    return obj


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Deterministic serialization: sorted keys, one record per line."""
    lines = [FORMAT_HEADER]
    for ex in corpus.examples:
        record = {
            "text": " ".join(ex.tokens),
            "task": corpus.task,
            "aspects": [_aspect_to_obj(a, ex.tokens) for a in ex.aspects],
        }
        lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def compute_stats(corpus: Corpus) -> CorpusStats:
    counts = [0, 0, 0]
    aspects = 0
    for ex in corpus.examples:
        for a in ex.aspects:
            if a.polarity is None:
                raise UnlabeledAspect("cannot compute polarity statistics: unlabeled aspect")
            counts[a.polarity] += 1
            aspects += 1
    return CorpusStats(len(corpus), aspects, aspects / len(corpus), tuple(counts))


# --- synthetic corpus ----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Clause grammar: [connector] the [distractor?] noun copula
    [intensifier?] cue.  Gold polarity of each aspect is the polarity of
    the cue after its copula; the optional distractor is a wrong-polarity
    cue placed before some noun."""

    seed: int = 7
    train_sentences: int = 2000
    dev_sentences: int = 500
    test_sentences: int = 500
    mean_aspects: float = 2.6
    task: str = "atsa"
    nouns: tuple[tuple[str, str], ...] = (
        ("salmon", "food"),
        ("service", "service"),
        ("waiter", "staff"),
        ("bill", "price"),
        ("decor", "ambience"),
        ("menu", "menu"),
        ("patio", "place"),
        ("parking", "miscellaneous"),
    )
    positive_cues: tuple[str, ...] = ("tasty", "lovely", "superb", "delightful", "excellent", "charming")
    neutral_cues: tuple[str, ...] = ("average", "ordinary", "standard", "unremarkable", "acceptable", "plain")
    negative_cues: tuple[str, ...] = ("rude", "awful", "bland", "dreadful", "overpriced", "noisy")
    connectors: tuple[str, ...] = ("while", "but", "although")
    intensifiers: tuple[str, ...] = ("really", "very", "quite")
    copulas: tuple[str, ...] = ("is", "was")
    determiner: str = "the"
    intensifier_prob: float = 0.3
    cross_cue_prob: float = 0.5

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise InfeasibleSpec(f"unknown task {self.task!r}")
        if min(self.train_sentences, self.dev_sentences, self.test_sentences) < 1:
            raise InfeasibleSpec("every split needs at least one sentence")
        if self.mean_aspects < 2:
            raise InfeasibleSpec(
                f"mean aspects {self.mean_aspects} < 2 cannot satisfy the "
                "multi-aspect property"
            )
        if math.ceil(self.mean_aspects) > len(self.nouns):
            raise InfeasibleSpec(
                f"mean aspects {self.mean_aspects} needs more nouns than the "
                f"{len(self.nouns)} provided"
            )
        families = [
            [n for n, _ in self.nouns],
            self.positive_cues,
            self.neutral_cues,
            self.negative_cues,
            self.connectors,
            self.intensifiers,
            self.copulas,
            [self.determiner],
        ]
        flat = [w for fam in families for w in fam]
        if len(set(flat)) != len(flat):
            raise InfeasibleSpec("lexicon families must be pairwise disjoint words")
        if not all(families):
            raise InfeasibleSpec("every lexicon family needs at least one word")
        for _, cat in self.nouns:
            if cat not in CATEGORIES:
                raise InfeasibleSpec(f"noun category {cat!r} not in {CATEGORIES}")
        if len({cat for _, cat in self.nouns}) != len(self.nouns):
            raise InfeasibleSpec("noun categories must be distinct")
        if not 0.0 <= self.cross_cue_prob <= 1.0 or not 0.0 <= self.intensifier_prob <= 1.0:
            raise InfeasibleSpec("probabilities must lie in [0, 1]")

    def cues_for(self, polarity: Polarity) -> tuple[str, ...]:
        return (self.positive_cues, self.neutral_cues, self.negative_cues)[polarity]

    def cue_polarity(self, word: str) -> Polarity | None:
        for pol in Polarity:
            if word in self.cues_for(pol):
                return pol
        return None

    def noun_for_category(self, category: str) -> str:
        for noun, cat in self.nouns:
            if cat == category:
                return noun
        raise UnknownCategory(f"no noun maps to category {category!r} in this spec")


def _draw_aspect_count(spec: SyntheticSpec, rng: np.random.Generator) -> int:
    """Two-point distribution on {floor(mean), floor(mean)+1} whose
    expectation is exactly the configured mean."""
    low = math.floor(spec.mean_aspects)
    frac = spec.mean_aspects - low
    m = low + (1 if rng.random() < frac else 0)
    return min(m, len(spec.nouns))


def _generate_sentence(spec: SyntheticSpec, rng: np.random.Generator):
    """One sentence: token list plus (noun position, category, polarity)
    per aspect in clause order."""
    m = _draw_aspect_count(spec, rng)
    noun_idx = rng.choice(len(spec.nouns), size=m, replace=False)
    while True:
        polarities = [Polarity(int(p)) for p in rng.integers(0, 3, size=m)]
        if len(set(polarities)) >= 2:
            break
    distract_clause = -1
    distract_cue = ""
    if rng.random() < spec.cross_cue_prob:
        distract_clause = int(rng.integers(0, m))
        wrong = [p for p in Polarity if p != polarities[distract_clause]]
        pol = wrong[int(rng.integers(0, 2))]
        cues = spec.cues_for(pol)
        distract_cue = cues[int(rng.integers(0, len(cues)))]
    tokens: list[str] = []
    aspects: list[tuple[int, str, Polarity]] = []
    for i in range(m):
        noun, category = spec.nouns[int(noun_idx[i])]
        if i > 0:
            tokens.append(spec.connectors[int(rng.integers(0, len(spec.connectors)))])
        tokens.append(spec.determiner)
        if i == distract_clause:
            tokens.append(distract_cue)
        aspects.append((len(tokens), category, polarities[i]))
        tokens.append(noun)
        tokens.append(spec.copulas[int(rng.integers(0, len(spec.copulas)))])
        if rng.random() < spec.intensifier_prob:
            tokens.append(spec.intensifiers[int(rng.integers(0, len(spec.intensifiers)))])
        cues = spec.cues_for(polarities[i])
        tokens.append(cues[int(rng.integers(0, len(cues)))])
    return tokens, aspects


def _to_example(spec: SyntheticSpec, tokens: list[str], aspects) -> Example:
    if spec.task == "atsa":
        return AtsaExample(
            tuple(tokens),
            tuple(TermAspect(pos, pos + 1, pol) for pos, _, pol in aspects),
        )
    return AcsaExample(
        tuple(tokens),
        tuple(CategoryAspect(cat, pol) for _, cat, pol in aspects),
    )


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Three sentence-disjoint splits, fully determined by spec.seed."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    want = spec.train_sentences + spec.dev_sentences + spec.test_sentences
    seen: set[tuple[str, ...]] = set()
    examples: list[Example] = []
    attempts = 0
    max_attempts = 100 * want
    while len(examples) < want:
        attempts += 1
        if attempts > max_attempts:
            raise InfeasibleSpec(
                f"could not draw {want} distinct sentences in {max_attempts} "
                "attempts; the lexicon space is too small"
            )
        tokens, aspects = _generate_sentence(spec, rng)
        key = tuple(tokens)
        if key in seen:
            continue
        seen.add(key)
        examples.append(_to_example(spec, tokens, aspects))
    splits = []
    offset = 0
    for split, count in zip(
        SPLITS, (spec.train_sentences, spec.dev_sentences, spec.test_sentences)
    ):
        splits.append(
            Corpus(
                spec.task,
                split,
                tuple(examples[offset : offset + count]),
                Provenance(f"synthetic(seed={spec.seed})", FORMAT_HEADER),
            )
        )
        offset += count
    return tuple(splits)


def _noun_position(example: Example, aspect, spec: SyntheticSpec) -> int:
    if isinstance(aspect, TermAspect):
        return aspect.start
    return example.tokens.index(spec.noun_for_category(aspect.category))


def cue_regions(example: Example, spec: SyntheticSpec) -> list[tuple[int, int]]:
    """Per aspect, the word range (start, end) of its predicate: every
    position after the noun up to the next connector or sentence end."""
    out = []
    for aspect in example.aspects:
        pos = _noun_position(example, aspect, spec)
        end = pos + 1
        while end < len(example.tokens) and example.tokens[end] not in spec.connectors:
            end += 1
        out.append((pos + 1, end))
    return out


def cue_adjacency_labels(example: Example, spec: SyntheticSpec) -> list[Polarity]:
    """Read each aspect's label off the sentence: the polarity of the
    first cue word inside its predicate region.  On generator output this
    recovers the gold labels exactly (the task is 100% separable)."""
    labels = []
    for (start, end) in cue_regions(example, spec):
        found = None
        for w in range(start, end):
            found = spec.cue_polarity(example.tokens[w])
            if found is not None:
                break
        if found is None:
            raise SpanMismatch("no cue word inside a predicate region")
        labels.append(found)
    return labels
