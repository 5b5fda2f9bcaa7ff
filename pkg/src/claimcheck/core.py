"""Shared domain types and the label algebra the rest of the package builds on.

Everything here is a plain immutable value: safe to share across threads and
cheap to serialize. No module in this file ever talks to a model backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence


class EmptyLabelSetError(ValueError):
    """Raised when a label aggregation receives no labels."""


class SettingMismatchError(ValueError):
    """Raised when an example's reference count is illegal for its setting."""


class SchemaViolationError(ValueError):
    """Raised when a JSONL record does not match its declared schema.

    ``line`` carries the 1-based line number when the violation was found
    while reading a file, otherwise None.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContextSetting(str, Enum):
    """How much reference context the answering model saw.

    ZERO:     closed-book question answering, one gold reference passage.
    NOISY:    retrieval-augmented generation, one or more retrieved passages.
    ACCURATE: a single accurate context document given with the question.
    """

    ZERO = "zero"
    NOISY = "noisy"
    ACCURATE = "accurate"


class HallucinationLabel(str, Enum):
    """Verdict for one claim checked against reference text."""

    ENTAILMENT = "entailment"
    NEUTRAL = "neutral"
    CONTRADICTION = "contradiction"


# Severity order used for response-level pooling: a single contradicted claim
# makes the whole response contradictory, a single unverifiable claim makes an
# otherwise supported response neutral.
_SEVERITY = {
    HallucinationLabel.ENTAILMENT: 0,
    HallucinationLabel.NEUTRAL: 1,
    HallucinationLabel.CONTRADICTION: 2,
}

_SCALAR = {
    HallucinationLabel.CONTRADICTION: -1,
    HallucinationLabel.NEUTRAL: 0,
    HallucinationLabel.ENTAILMENT: 1,
}

#: Canonical label order used everywhere a fixed ordering is needed
#: (probability vectors, confusion matrices): (entailment, neutral, contradiction).
LABEL_ORDER = (
    HallucinationLabel.ENTAILMENT,
    HallucinationLabel.NEUTRAL,
    HallucinationLabel.CONTRADICTION,
)


def severity_max(labels: Iterable[HallucinationLabel]) -> HallucinationLabel:
    """Max-pool labels under the severity order Entailment < Neutral < Contradiction."""
    best: HallucinationLabel | None = None
    for label in labels:
        if best is None or _SEVERITY[label] > _SEVERITY[best]:
            best = label
    if best is None:
        raise EmptyLabelSetError("severity_max of an empty label set is undefined")
    return best


def scalar_score(label: HallucinationLabel) -> int:
    """Map a verdict to its scalar score: contradiction -1, neutral 0, entailment +1."""
    return _SCALAR[label]


def _clean_part(name: str, value: str) -> str:
    if not isinstance(value, str):
        raise TypeError(f"triplet {name} must be a string, got {type(value).__name__}")
    cleaned = value.strip()
    if not cleaned:
        raise ValueError(f"triplet {name} must be non-empty after trimming")
    return cleaned


@dataclass(frozen=True)
class ClaimTriplet:
    """One atomic claim as a (head, relation, tail) triple.

    Parts are stored whitespace-trimmed and must be non-empty. The triple is
    order-significant: (h, r, t) is not the same claim as (t, r, h).
    """

    head: str
    relation: str
    tail: str
    source_response_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "head", _clean_part("head", self.head))
        object.__setattr__(self, "relation", _clean_part("relation", self.relation))
        object.__setattr__(self, "tail", _clean_part("tail", self.tail))

    def as_sentence(self) -> str:
        """Render the claim as a flat clause, e.g. for an NLI hypothesis."""
        return f"{self.head} {self.relation} {self.tail}"


@dataclass(frozen=True)
class BenchmarkExample:
    """One benchmark question with its reference passages.

    Noisy-context examples may carry several retrieved passages; zero-context
    and accurate-context examples carry exactly one reference.
    """

    id: str
    setting: ContextSetting
    question: str
    references: tuple[str, ...]
    gold_claims: tuple[tuple[ClaimTriplet, HallucinationLabel], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "references", tuple(self.references))
        if self.gold_claims is not None:
            object.__setattr__(self, "gold_claims", tuple(self.gold_claims))
        if len(self.references) < 1:
            raise SettingMismatchError(
                f"example {self.id!r}: at least one reference passage is required"
            )
        if self.setting is not ContextSetting.NOISY and len(self.references) != 1:
            raise SettingMismatchError(
                f"example {self.id!r}: setting {self.setting.value!r} requires exactly "
                f"one reference, got {len(self.references)}"
            )


@dataclass(frozen=True)
class ResponseRecord:
    """One model response to one benchmark example.

    ``claims`` is None before extraction and a (possibly empty) tuple after;
    an extracted-but-empty claim list marks the response as abstained.
    ``verdicts`` aligns with ``claims`` one to one once checking has run.
    """

    id: str
    example_id: str
    model_name: str
    response_text: str
    claims: tuple[ClaimTriplet, ...] | None = None
    verdicts: tuple[HallucinationLabel, ...] | None = None

    def __post_init__(self) -> None:
        if self.claims is not None:
            object.__setattr__(self, "claims", tuple(self.claims))
        if self.verdicts is not None:
            object.__setattr__(self, "verdicts", tuple(self.verdicts))
        if self.claims is not None and self.verdicts is not None:
            if len(self.claims) != len(self.verdicts):
                raise ValueError(
                    f"record {self.id!r}: {len(self.claims)} claims but "
                    f"{len(self.verdicts)} verdicts"
                )
        if self.verdicts is not None and self.claims is None:
            raise ValueError(f"record {self.id!r}: verdicts present without claims")

    @property
    def abstained(self) -> bool:
        """True when extraction ran and produced no claims."""
        return self.claims is not None and len(self.claims) == 0

    def with_claims(self, claims: Sequence[ClaimTriplet]) -> "ResponseRecord":
        return ResponseRecord(
            id=self.id,
            example_id=self.example_id,
            model_name=self.model_name,
            response_text=self.response_text,
            claims=tuple(claims),
            verdicts=None,
        )

    def with_verdicts(self, verdicts: Sequence[HallucinationLabel]) -> "ResponseRecord":
        if self.claims is None:
            raise ValueError(f"record {self.id!r}: cannot attach verdicts before claims")
        return ResponseRecord(
            id=self.id,
            example_id=self.example_id,
            model_name=self.model_name,
            response_text=self.response_text,
            claims=self.claims,
            verdicts=tuple(verdicts),
        )


# ---------------------------------------------------------------------------
# JSONL schemas
#
# One JSON object per line, snake_case field names. Optional fields are
# omitted, not null. These converters are strict about required fields and
# types but tolerate unknown extra fields.
# ---------------------------------------------------------------------------


def _require(obj: Mapping, key: str, kind: type, where: str):
    if key not in obj:
        raise SchemaViolationError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise SchemaViolationError(
            f"{where}: field {key!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_label(value: object, where: str) -> HallucinationLabel:
    if not isinstance(value, str):
        raise SchemaViolationError(f"{where}: label must be a string")
    try:
        return HallucinationLabel(value)
    except ValueError:
        raise SchemaViolationError(f"{where}: unknown label {value!r}") from None


def triplet_to_dict(triplet: ClaimTriplet) -> dict:
    out = {"head": triplet.head, "relation": triplet.relation, "tail": triplet.tail}
    if triplet.source_response_id:
        out["source_response_id"] = triplet.source_response_id
    return out


def triplet_from_dict(obj: Mapping, where: str = "triplet") -> ClaimTriplet:
    head = _require(obj, "head", str, where)
    relation = _require(obj, "relation", str, where)
    tail = _require(obj, "tail", str, where)
    source = obj.get("source_response_id", "")
    if not isinstance(source, str):
        raise SchemaViolationError(f"{where}: source_response_id must be a string")
    try:
        return ClaimTriplet(head=head, relation=relation, tail=tail, source_response_id=source)
    except (TypeError, ValueError) as exc:
        raise SchemaViolationError(f"{where}: {exc}") from None


def example_to_dict(example: BenchmarkExample) -> dict:
    out: dict = {
        "id": example.id,
        "setting": example.setting.value,
        "question": example.question,
        "references": list(example.references),
    }
    if example.gold_claims is not None:
        out["gold_claims"] = [
            {**triplet_to_dict(t), "label": label.value} for t, label in example.gold_claims
        ]
    return out


def example_from_dict(obj: Mapping) -> BenchmarkExample:
    where = f"example {obj.get('id', '?')!r}"
    example_id = _require(obj, "id", str, where)
    setting_name = _require(obj, "setting", str, where)
    try:
        setting = ContextSetting(setting_name)
    except ValueError:
        raise SchemaViolationError(f"{where}: unknown setting {setting_name!r}") from None
    question = _require(obj, "question", str, where)
    references = _require(obj, "references", list, where)
    for i, ref in enumerate(references):
        if not isinstance(ref, str):
            raise SchemaViolationError(f"{where}: references[{i}] must be a string")
    gold_claims = None
    if "gold_claims" in obj:
        raw = obj["gold_claims"]
        if not isinstance(raw, list):
            raise SchemaViolationError(f"{where}: gold_claims must be a list")
        gold_claims = tuple(
            (triplet_from_dict(entry, f"{where} gold_claims[{i}]"),
             _parse_label(entry.get("label"), f"{where} gold_claims[{i}]"))
            for i, entry in enumerate(raw)
        )
    try:
        return BenchmarkExample(
            id=example_id,
            setting=setting,
            question=question,
            references=tuple(references),
            gold_claims=gold_claims,
        )
    except SettingMismatchError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaViolationError(f"{where}: {exc}") from None


def record_to_dict(record: ResponseRecord) -> dict:
    out: dict = {
        "id": record.id,
        "example_id": record.example_id,
        "model_name": record.model_name,
        "response_text": record.response_text,
    }
    if record.claims is not None:
        out["claims"] = [triplet_to_dict(t) for t in record.claims]
    if record.verdicts is not None:
        out["verdicts"] = [v.value for v in record.verdicts]
    return out


def record_from_dict(obj: Mapping) -> ResponseRecord:
    where = f"record {obj.get('id', '?')!r}"
    record_id = _require(obj, "id", str, where)
    example_id = _require(obj, "example_id", str, where)
    model_name = _require(obj, "model_name", str, where)
    response_text = _require(obj, "response_text", str, where)
    claims = None
    if "claims" in obj:
        raw = obj["claims"]
        if not isinstance(raw, list):
            raise SchemaViolationError(f"{where}: claims must be a list")
        claims = tuple(
            triplet_from_dict(entry, f"{where} claims[{i}]") for i, entry in enumerate(raw)
        )
    verdicts = None
    if "verdicts" in obj:
        raw = obj["verdicts"]
        if not isinstance(raw, list):
            raise SchemaViolationError(f"{where}: verdicts must be a list")
        verdicts = tuple(
            _parse_label(entry, f"{where} verdicts[{i}]") for i, entry in enumerate(raw)
        )
    try:
        return ResponseRecord(
            id=record_id,
            example_id=example_id,
            model_name=model_name,
            response_text=response_text,
            claims=claims,
            verdicts=verdicts,
        )
    except (TypeError, ValueError) as exc:
        raise SchemaViolationError(f"{where}: {exc}") from None


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, parsed object) for each non-blank line of a JSONL file."""
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolationError(f"invalid JSON: {exc}", line=line_number) from None
            if not isinstance(obj, dict):
                raise SchemaViolationError("record must be a JSON object", line=line_number)
            yield line_number, obj


def write_jsonl(path: str | Path, rows: Iterable[Mapping]) -> int:
    """Write one JSON object per line; returns the number of rows written."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False))
            handle.write("\n")
            count += 1
    return count


def load_records(path: str | Path) -> list[ResponseRecord]:
    """Read a ResponseRecord JSONL file, reporting offending line numbers."""
    records = []
    for line_number, obj in read_jsonl(path):
        try:
            records.append(record_from_dict(obj))
        except SchemaViolationError as exc:
            if exc.line is None:
                raise SchemaViolationError(str(exc), line=line_number) from None
            raise
    return records
