"""Claim checking: label each (claim, reference) pair via an LLM or NLI backend.

Two label-combination rules live in this package and they are intentionally
different. Across reference passages/chunks the evidence-seeking rule applies
(any entailment wins, then any contradiction, else neutral; chunk_aggregate
here). Within a response, pooling claim verdicts uses the zero-tolerance
severity order instead (core.severity_max). Do not swap them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from claimcheck.backend import BackendUnreachableError, MalformedBackendReplyError
from claimcheck.core import (
    BenchmarkExample,
    ClaimTriplet,
    EmptyLabelSetError,
    HallucinationLabel,
    ResponseRecord,
)


class EmptyReferenceError(ValueError):
    """Raised when a checking operation receives no usable reference text."""


class AllCallsFailedError(RuntimeError):
    """Raised when every per-chunk backend call for one claim failed."""


class ClaimsMissingError(ValueError):
    """Raised when a response record has not been through extraction yet."""


class CheckerKind(str, Enum):
    PROMPTED_LLM = "prompted_llm"
    REMOTE_NLI = "remote_nli"
    REPC = "repc"


@dataclass(frozen=True)
class ClaimVerdict:
    """The label for one claim, with the per-chunk evidence behind it.

    ``parse_failures`` counts chunk replies that had to fall back to the
    configured label because no single label word could be read from them.
    """

    claim: ClaimTriplet
    label: HallucinationLabel
    per_chunk_labels: tuple[HallucinationLabel, ...] | None = None
    raw_checker_output: str = ""
    parse_failures: int = 0

    def __post_init__(self) -> None:
        if self.per_chunk_labels is not None:
            object.__setattr__(self, "per_chunk_labels", tuple(self.per_chunk_labels))
            if chunk_aggregate(self.per_chunk_labels) is not self.label:
                raise ValueError("label does not aggregate from per_chunk_labels")


DEFAULT_CHECK_PROMPT = (
    "Decide whether the claim is supported by the reference. Answer with exactly "
    "one word: Entailment if the reference supports the claim, Contradiction if "
    "the reference contradicts it, or Neutral if the reference neither supports "
    "nor contradicts it.\n"
    "\n"
    "Reference:\n"
    "{reference}\n"
    "\n"
    "Claim: {claim}\n"
    "\n"
    "Answer:"
)


def render_check_prompt(claim: ClaimTriplet, reference: str) -> str:
    """Deterministic checking prompt for one claim against one reference text."""
    if not reference.strip():
        raise EmptyReferenceError("reference text is empty")
    return DEFAULT_CHECK_PROMPT.replace("{reference}", reference).replace(
        "{claim}", claim.as_sentence()
    )


_LABEL_PATTERNS = {
    label: re.compile(rf"\b{label.value}\b", re.IGNORECASE) for label in HallucinationLabel
}


def parse_label(raw: str) -> HallucinationLabel | None:
    """Read a verdict from checker output; None when absent or ambiguous.

    Exactly one distinct label word (however often repeated) must occur.
    """
    found = [label for label, pattern in _LABEL_PATTERNS.items() if pattern.search(raw)]
    if len(found) == 1:
        return found[0]
    return None


_SENTENCE_END = (".", "!", "?")
_CLOSERS = "\"')]}’”»"


def _ends_sentence(word: str) -> bool:
    return word.rstrip(_CLOSERS).endswith(_SENTENCE_END)


def split_reference(reference: str, chunk_size_tokens: int) -> list[str]:
    """Split a reference into windows of at most chunk_size_tokens words.

    A token is a maximal whitespace-delimited word. When a window would cut
    mid-text, the cut moves back to the last sentence-ending word inside the
    window if there is one. No word is lost and no chunk exceeds the bound.
    """
    if chunk_size_tokens < 16:
        raise ValueError(f"chunk_size_tokens must be >= 16, got {chunk_size_tokens}")
    words = reference.split()
    if not words:
        return []
    chunks: list[str] = []
    start = 0
    while start < len(words):
        end = min(start + chunk_size_tokens, len(words))
        cut = end
        if end < len(words):
            for i in range(end - 1, start - 1, -1):
                if _ends_sentence(words[i]):
                    cut = i + 1
                    break
        chunks.append(" ".join(words[start:cut]))
        start = cut
    return chunks


def chunk_aggregate(labels: Sequence[HallucinationLabel]) -> HallucinationLabel:
    """Combine per-chunk labels: any entailment wins, else any contradiction, else neutral.

    This is the evidence-seeking rule for one claim across reference pieces;
    it is the opposite priority from response-level severity pooling.
    """
    if not labels:
        raise EmptyLabelSetError("chunk_aggregate of an empty label set is undefined")
    if HallucinationLabel.ENTAILMENT in labels:
        return HallucinationLabel.ENTAILMENT
    if HallucinationLabel.CONTRADICTION in labels:
        return HallucinationLabel.CONTRADICTION
    return HallucinationLabel.NEUTRAL


class _Checker:
    """Shared response-level driver for the concrete checkers."""

    def check_claim(self, claim: ClaimTriplet, references: Sequence[str]) -> ClaimVerdict:
        raise NotImplementedError

    def check_response_detailed(
        self, record: ResponseRecord, example: BenchmarkExample
    ) -> tuple[ResponseRecord, list[ClaimVerdict]]:
        """Check every claim of one record; verdict order matches claim order."""
        if record.claims is None:
            raise ClaimsMissingError(f"record {record.id!r} has no extracted claims")
        if record.example_id != example.id:
            raise ValueError(
                f"record {record.id!r} belongs to example {record.example_id!r}, "
                f"not {example.id!r}"
            )
        verdicts = [self.check_claim(claim, example.references) for claim in record.claims]
        checked = record.with_verdicts([v.label for v in verdicts])
        return checked, verdicts

    def check_response(
        self, record: ResponseRecord, example: BenchmarkExample
    ) -> ResponseRecord:
        checked, _ = self.check_response_detailed(record, example)
        return checked


class PromptedLLMChecker(_Checker):
    """Checks claims by prompting a completion backend, one call per passage."""

    def __init__(
        self,
        client,
        backend_id: str,
        fallback_label: HallucinationLabel = HallucinationLabel.NEUTRAL,
        max_tokens: int = 32,
    ):
        self._client = client
        self._backend_id = backend_id
        self._fallback = fallback_label
        self._max_tokens = max_tokens

    def check_claim(self, claim: ClaimTriplet, references: Sequence[str]) -> ClaimVerdict:
        usable = [ref for ref in references if ref.strip()]
        if not usable:
            raise EmptyReferenceError("no non-empty reference passages")
        labels: list[HallucinationLabel] = []
        raws: list[str] = []
        failures = 0
        last_error: Exception | None = None
        for reference in usable:
            prompt = render_check_prompt(claim, reference)
            try:
                raw = self._client.complete(
                    self._backend_id, prompt, max_tokens=self._max_tokens, temperature=0.0
                )
            except (BackendUnreachableError, MalformedBackendReplyError) as exc:
                last_error = exc
                continue
            raws.append(raw)
            label = parse_label(raw)
            if label is None:
                failures += 1
                label = self._fallback
            labels.append(label)
        if not labels:
            raise AllCallsFailedError(
                f"all {len(usable)} checker calls failed for claim {claim.as_sentence()!r}"
            ) from last_error
        return ClaimVerdict(
            claim=claim,
            label=chunk_aggregate(labels),
            per_chunk_labels=tuple(labels),
            raw_checker_output="\n---\n".join(raws),
            parse_failures=failures,
        )


class RemoteNLIChecker(_Checker):
    """Checks claims with a remote NLI classifier over reference chunks."""

    def __init__(self, client, backend_id: str, chunk_size_tokens: int = 200):
        if chunk_size_tokens < 16:
            raise ValueError(f"chunk_size_tokens must be >= 16, got {chunk_size_tokens}")
        self._client = client
        self._backend_id = backend_id
        self._chunk_size = chunk_size_tokens

    def check_claim(self, claim: ClaimTriplet, references: Sequence[str]) -> ClaimVerdict:
        chunks: list[str] = []
        for reference in references:
            chunks.extend(split_reference(reference, self._chunk_size))
        if not chunks:
            raise EmptyReferenceError("no non-empty reference passages")
        hypothesis = claim.as_sentence()
        labels: list[HallucinationLabel] = []
        raws: list[str] = []
        last_error: Exception | None = None
        for chunk in chunks:
            try:
                result = self._client.classify_nli(self._backend_id, chunk, hypothesis)
            except (BackendUnreachableError, MalformedBackendReplyError) as exc:
                last_error = exc
                continue
            labels.append(result.label)
            e, n, c = result.scores
            raws.append(f"{result.label.value} e={e:.6f} n={n:.6f} c={c:.6f}")
        if not labels:
            raise AllCallsFailedError(
                f"all {len(chunks)} NLI calls failed for claim {hypothesis!r}"
            ) from last_error
        return ClaimVerdict(
            claim=claim,
            label=chunk_aggregate(labels),
            per_chunk_labels=tuple(labels),
            raw_checker_output="\n".join(raws),
        )


def build_checker(
    kind: CheckerKind | str,
    client,
    backend_id: str,
    chunk_size_tokens: int = 200,
    fallback_label: HallucinationLabel = HallucinationLabel.NEUTRAL,
    max_tokens: int = 32,
) -> _Checker:
    kind = CheckerKind(kind)
    if kind is CheckerKind.PROMPTED_LLM:
        return PromptedLLMChecker(client, backend_id, fallback_label, max_tokens)
    if kind is CheckerKind.REMOTE_NLI:
        return RemoteNLIChecker(client, backend_id, chunk_size_tokens)
    raise ValueError(
        "repc checking runs over exported representation files; "
        "use the repc-predict command instead of a live checker"
    )
