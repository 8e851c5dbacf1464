"""Task records, record-per-line file formats, and negative sampling.

Task files and annotated-corpus files are JSON Lines (UTF-8, LF). Field
names are part of the on-disk contract:

task record
    {"sentence_id": str, "span1": [start, end], "span2": [start, end]?,
     "label": 0|1, "gold": str?}

corpus record
    {"sentence_id": str, "tokens": [str, ...],
     "positive_units": [{"span1": [s, e], "span2": [s, e]?, "gold": str?}, ...],
     "candidate_spans": [[s, e], ...]?}

Spans are half-open token intervals. In strict mode parsers reject
records carrying unknown fields.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embfile import BundleIndex

Span = tuple[int, int]


class TaskFileError(Exception):
    """Malformed task or corpus file; carries the 1-based line number."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(message + suffix)
        self.line = line
        self.path = path


class SamplingWarning(UserWarning):
    """Emitted when a sampler cannot supply the requested negatives."""


@dataclass(frozen=True)
class SpanTarget:
    """One probing example: a span (or span pair) with a binary label."""

    sentence_id: str
    span1: Span
    span2: Span | None = None
    label: int = 1
    gold: str | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.label == 0 and self.gold is not None:
            raise ValueError("negative examples cannot carry a gold label")
        for span in (self.span1, self.span2):
            if span is not None and not span[0] < span[1]:
                raise ValueError(f"empty or inverted span {span}")
            if span is not None and span[0] < 0:
                raise ValueError(f"negative span start {span}")

    @property
    def num_spans(self) -> int:
        return 1 if self.span2 is None else 2

    def unit(self) -> tuple:
        """Hashable identity of the spans, used for positive/negative disjointness."""
        return (self.span1, self.span2)


@dataclass(frozen=True)
class PositiveUnit:
    span1: Span
    span2: Span | None = None
    gold: str | None = None

    def unit(self) -> tuple:
        return (self.span1, self.span2)


@dataclass
class AnnotatedSentence:
    """Gold-annotated sentence used to build binary tasks."""

    sentence_id: str
    tokens: list[str]
    positive_units: list[PositiveUnit] = field(default_factory=list)
    candidate_spans: list[Span] | None = None

    def __post_init__(self):
        n = len(self.tokens)
        for unit in self.positive_units:
            for span in (unit.span1, unit.span2):
                if span is not None and not (0 <= span[0] < span[1] <= n):
                    raise ValueError(
                        f"sentence {self.sentence_id!r}: span {span} outside [0, {n})"
                    )
        for span in self.candidate_spans or []:
            if not (0 <= span[0] < span[1] <= n):
                raise ValueError(f"sentence {self.sentence_id!r}: candidate span {span} out of bounds")


@dataclass
class TaskDataset:
    """One split of a binary probing task."""

    name: str
    split: str
    examples: list[SpanTarget]
    label_inventory: set[str] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def num_spans(self) -> int:
        if not self.examples:
            raise ValueError(f"task {self.name!r} has no examples")
        return self.examples[0].num_spans


# ---------------------------------------------------------------------------
# record parsing

_TASK_FIELDS = {"sentence_id", "span1", "span2", "label", "gold"}
_CORPUS_FIELDS = {"sentence_id", "tokens", "positive_units", "candidate_spans"}
_UNIT_FIELDS = {"span1", "span2", "gold"}


def _parse_span(obj, what: str) -> Span:
    if (
        not isinstance(obj, (list, tuple))
        or len(obj) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in obj)
    ):
        raise ValueError(f"{what} must be a [start, end] pair of integers, got {obj!r}")
    return (obj[0], obj[1])


def _check_fields(record: dict, allowed: set[str], strict: bool, what: str) -> None:
    if not isinstance(record, dict):
        raise ValueError(f"{what} must be a JSON object")
    unknown = set(record) - allowed
    if unknown and strict:
        raise ValueError(f"{what} has unknown fields {sorted(unknown)}")


def parse_task_record(record: dict, strict: bool = True) -> SpanTarget:
    _check_fields(record, _TASK_FIELDS, strict, "task record")
    for name in ("sentence_id", "span1", "label"):
        if name not in record:
            raise ValueError(f"task record missing field {name!r}")
    span2 = record.get("span2")
    return SpanTarget(
        sentence_id=record["sentence_id"],
        span1=_parse_span(record["span1"], "span1"),
        span2=None if span2 is None else _parse_span(span2, "span2"),
        label=record["label"],
        gold=record.get("gold"),
    )


def parse_corpus_record(record: dict, strict: bool = True) -> AnnotatedSentence:
    _check_fields(record, _CORPUS_FIELDS, strict, "corpus record")
    for name in ("sentence_id", "tokens"):
        if name not in record:
            raise ValueError(f"corpus record missing field {name!r}")
    units = []
    for raw in record.get("positive_units", []):
        _check_fields(raw, _UNIT_FIELDS, strict, "positive unit")
        if "span1" not in raw:
            raise ValueError("positive unit missing field 'span1'")
        span2 = raw.get("span2")
        units.append(
            PositiveUnit(
                span1=_parse_span(raw["span1"], "span1"),
                span2=None if span2 is None else _parse_span(span2, "span2"),
                gold=raw.get("gold"),
            )
        )
    cands = record.get("candidate_spans")
    return AnnotatedSentence(
        sentence_id=record["sentence_id"],
        tokens=list(record["tokens"]),
        positive_units=units,
        candidate_spans=None if cands is None else [_parse_span(s, "candidate span") for s in cands],
    )


def _iter_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaskFileError(f"invalid JSON: {exc.msg}", line=lineno, path=str(path)) from None


def _split_from_stem(stem: str) -> tuple[str, str]:
    # "ner.dev" -> ("ner", "dev"); bare stems default to train
    if "." in stem:
        name, _, split = stem.rpartition(".")
        if split in ("train", "dev", "test"):
            return name, split
    return stem, "train"


def load_task(
    path: str | Path,
    embeddings: BundleIndex | None = None,
    *,
    name: str | None = None,
    split: str | None = None,
    strict: bool = True,
) -> TaskDataset:
    """Load one task split, resolving every record against the bundle index.

    When ``embeddings`` is given, dangling sentence ids and out-of-bounds
    spans raise :class:`TaskFileError` with the offending line number.
    """
    path = Path(path)
    auto_name, auto_split = _split_from_stem(path.name.removesuffix(".jsonl"))
    dataset = TaskDataset(name=name or auto_name, split=split or auto_split, examples=[])
    arity: int | None = None
    for lineno, record in _iter_jsonl(path):
        try:
            target = parse_task_record(record, strict=strict)
        except ValueError as exc:
            raise TaskFileError(str(exc), line=lineno, path=str(path)) from None
        if arity is None:
            arity = target.num_spans
        elif target.num_spans != arity:
            raise TaskFileError(
                f"mixed span arity: expected {arity} span(s)", line=lineno, path=str(path)
            )
        if embeddings is not None:
            if target.sentence_id not in embeddings:
                raise TaskFileError(
                    f"unknown sentence id {target.sentence_id!r}", line=lineno, path=str(path)
                )
            num_tokens = embeddings[target.sentence_id].num_tokens
            for span in (target.span1, target.span2):
                if span is not None and not (0 <= span[0] < span[1] <= num_tokens):
                    raise TaskFileError(
                        f"span {span} outside sentence of {num_tokens} token(s)",
                        line=lineno,
                        path=str(path),
                    )
        dataset.examples.append(target)
        if target.label == 1 and target.gold is not None:
            dataset.label_inventory.add(target.gold)
    if not dataset.examples:
        raise TaskFileError("task file has no records", path=str(path))
    return dataset


def write_task(path: str | Path, examples: list[SpanTarget]) -> None:
    lines = []
    for t in examples:
        record: dict = {"sentence_id": t.sentence_id, "span1": list(t.span1)}
        if t.span2 is not None:
            record["span2"] = list(t.span2)
        record["label"] = t.label
        if t.gold is not None:
            record["gold"] = t.gold
        lines.append(json.dumps(record, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_corpus(path: str | Path, *, strict: bool = True) -> list[AnnotatedSentence]:
    sentences = []
    for lineno, record in _iter_jsonl(path):
        try:
            sentences.append(parse_corpus_record(record, strict=strict))
        except ValueError as exc:
            raise TaskFileError(str(exc), line=lineno, path=str(path)) from None
    return sentences


# ---------------------------------------------------------------------------
# negative sampling

def _all_spans(num_tokens: int) -> list[Span]:
    return [(i, j) for i in range(num_tokens) for j in range(i + 1, num_tokens + 1)]


def _requested(ratio: float, num_positives: int) -> int:
    if ratio < 0:
        raise ValueError(f"ratio must be non-negative, got {ratio}")
    return math.ceil(ratio * num_positives)


def _warn_short(sentence_id: str, want: int, have: int) -> None:
    if have < want:
        warnings.warn(
            f"sentence {sentence_id!r}: only {have} negative(s) available, wanted {want}",
            SamplingWarning,
            stacklevel=3,
        )


def sample_negative_spans(
    sentence: AnnotatedSentence,
    strategy: str,
    ratio: float,
    rng_seed: int,
) -> list[SpanTarget]:
    """Sample label-0 spans disjoint from the sentence's positive spans.

    ``from_candidates`` draws from ``candidate_spans`` (e.g. all noun
    phrases); ``random_spans`` draws from every possible span. The target
    count is ceil(ratio * positives), capped at the available pool;
    exhaustion warns instead of failing. Deterministic for a fixed seed.
    """
    positives = {unit.span1 for unit in sentence.positive_units}
    if strategy == "from_candidates":
        if sentence.candidate_spans is None:
            raise ValueError("strategy 'from_candidates' requires candidate_spans")
        pool = sentence.candidate_spans
    elif strategy == "random_spans":
        pool = _all_spans(len(sentence.tokens))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    available = sorted(set(pool) - positives)
    want = _requested(ratio, len(sentence.positive_units))
    take = min(want, len(available))
    _warn_short(sentence.sentence_id, want, take)
    rng = np.random.default_rng(rng_seed)
    chosen = rng.choice(len(available), size=take, replace=False) if take else []
    return [
        SpanTarget(sentence.sentence_id, available[int(i)], label=0)
        for i in sorted(int(i) for i in chosen)
    ]


def _midpoint(span: Span) -> float:
    return (span[0] + span[1]) / 2.0


def sample_negative_pairs(
    sentence: AnnotatedSentence,
    mode: str,
    ratio: float,
    rng_seed: int,
    *,
    scope: str = "per_anchor",
) -> list[SpanTarget]:
    """Sample label-0 span pairs absent from ``positive_units``.

    ``random_unattached`` samples uniformly from the unattached pool;
    ``closest_unattached`` takes pairs in order of ascending midpoint
    distance (ties broken by left then right span start). The pair pool
    is candidate_spans x candidate_spans when candidates are present,
    otherwise all ordered single-token pairs.

    ``scope`` controls both the ratio target and the pair universe:
    ``per_anchor`` draws ceil(ratio * positives-with-that-span1) for
    each distinct span1, pairing only that anchor with other units
    (predicate-style tasks); ``per_sentence`` draws
    ceil(ratio * positives) from every ordered unit pair (token-pair
    style tasks).
    """
    if mode not in ("random_unattached", "closest_unattached"):
        raise ValueError(f"unknown mode {mode!r}")
    if scope not in ("per_anchor", "per_sentence"):
        raise ValueError(f"unknown scope {scope!r}")
    positives = [u for u in sentence.positive_units if u.span2 is not None]
    if len(positives) != len(sentence.positive_units):
        raise ValueError("pair sampling requires every positive unit to hold a span pair")
    positive_pairs = {(u.span1, u.span2) for u in positives}

    if sentence.candidate_spans is not None:
        units = sorted(set(sentence.candidate_spans))
    else:
        units = [(i, i + 1) for i in range(len(sentence.tokens))]

    def pool_for(anchors: list[Span]) -> list[tuple[Span, Span]]:
        pairs = []
        for left in anchors:
            for right in units:
                if right != left and (left, right) not in positive_pairs:
                    pairs.append((left, right))
        return pairs

    if scope == "per_anchor":
        groups: dict[Span, int] = {}
        for unit in positives:
            groups[unit.span1] = groups.get(unit.span1, 0) + 1
        jobs = [(anchor, pool_for([anchor]), count) for anchor, count in sorted(groups.items())]
    else:
        jobs = [(None, pool_for(units), len(positives))]

    rng = np.random.default_rng(rng_seed)
    out: list[SpanTarget] = []
    for _anchor, pool, count in jobs:
        want = _requested(ratio, count)
        take = min(want, len(pool))
        _warn_short(sentence.sentence_id, want, take)
        if take == 0:
            continue
        if mode == "closest_unattached":
            ranked = sorted(
                pool,
                key=lambda pair: (
                    abs(_midpoint(pair[0]) - _midpoint(pair[1])),
                    pair[0][0],
                    pair[1][0],
                    pair[0][1],
                    pair[1][1],
                ),
            )
            chosen = ranked[:take]
        else:
            idx = rng.choice(len(pool), size=take, replace=False)
            chosen = [pool[int(i)] for i in sorted(int(i) for i in idx)]
        out.extend(
            SpanTarget(sentence.sentence_id, left, span2=right, label=0)
            for left, right in chosen
        )
    return out


def positives_as_targets(sentence: AnnotatedSentence) -> list[SpanTarget]:
    return [
        SpanTarget(sentence.sentence_id, u.span1, span2=u.span2, label=1, gold=u.gold)
        for u in sentence.positive_units
    ]
