"""Benchmark plumbing: example files, collection prompts, hard cases, manifests.

The dataset itself is not shipped; examples arrive as JSONL files in the
schema defined by :mod:`claimcheck.core`. This module renders the fixed
response-collection prompts for each context setting, scores and selects
hard cases from response-level judge verdicts, and records run manifests so
a run's inputs can be identified later.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

from claimcheck.core import (
    BenchmarkExample,
    ContextSetting,
    SchemaViolationError,
    SettingMismatchError,
    example_from_dict,
    example_to_dict,
    read_jsonl,
    write_jsonl,
)


class NotEnoughExamplesError(ValueError):
    """Raised when hard-case selection asks for more examples than exist."""


# ---------------------------------------------------------------------------
# Example files
# ---------------------------------------------------------------------------


def load_examples(path, setting: ContextSetting) -> list[BenchmarkExample]:
    """Read and validate benchmark examples, all bound to one setting."""
    setting = ContextSetting(setting)
    examples: list[BenchmarkExample] = []
    for line_number, obj in read_jsonl(path):
        try:
            example = example_from_dict(obj)
        except SchemaViolationError as exc:
            raise SchemaViolationError(str(exc), line=line_number) from None
        if example.setting is not setting:
            raise SettingMismatchError(
                f"line {line_number}: example {example.id!r} has setting "
                f"{example.setting.value!r}, expected {setting.value!r}"
            )
        examples.append(example)
    return examples


def save_examples(path, examples: Iterable[BenchmarkExample]) -> None:
    write_jsonl(path, (example_to_dict(example) for example in examples))


# ---------------------------------------------------------------------------
# Response-collection prompts
# ---------------------------------------------------------------------------

NOISY_COLLECTION_TEMPLATE = """\
Answer the question based on the passages below. Some passages may be \
irrelevant or misleading; use your judgment.

{passages}

Question: {question}
Answer:"""

ACCURATE_COLLECTION_TEMPLATE = """\
Answer the question based only on the reference below.

Reference: {reference}

Question: {question}
Answer:"""


def render_collection_prompt(example: BenchmarkExample) -> str:
    """The prompt shown to a response model for one benchmark example.

    Zero context sends the question alone; the other settings wrap the
    reference material and question in a fixed template.
    """
    if example.setting is ContextSetting.ZERO:
        return example.question
    if example.setting is ContextSetting.NOISY:
        passages = "\n".join(
            f"Passage {i}: {text}" for i, text in enumerate(example.references, 1)
        )
        return (NOISY_COLLECTION_TEMPLATE
                .replace("{passages}", passages)
                .replace("{question}", example.question))
    return (ACCURATE_COLLECTION_TEMPLATE
            .replace("{reference}", example.references[0])
            .replace("{question}", example.question))


# ---------------------------------------------------------------------------
# Hard-case selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HardnessScore:
    """Response-level judge verdicts for one example, with their hallucination ratio."""

    example_id: str
    judge_verdicts: Mapping[str, bool]
    hardness: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "judge_verdicts", dict(self.judge_verdicts))
        if not self.judge_verdicts:
            raise ValueError(f"example {self.example_id!r}: no judge verdicts")
        expected = sum(self.judge_verdicts.values()) / len(self.judge_verdicts)
        if abs(self.hardness - expected) > 1e-9:
            raise ValueError(
                f"example {self.example_id!r}: hardness {self.hardness} does not "
                f"equal the hallucinated fraction {expected}"
            )

    @classmethod
    def from_verdicts(cls, example_id: str,
                      judge_verdicts: Mapping[str, bool]) -> "HardnessScore":
        if not judge_verdicts:
            raise ValueError(f"example {example_id!r}: no judge verdicts")
        hardness = sum(judge_verdicts.values()) / len(judge_verdicts)
        return cls(example_id, dict(judge_verdicts), hardness)


def hardness_to_dict(score: HardnessScore) -> dict:
    return {
        "example_id": score.example_id,
        "judge_verdicts": dict(score.judge_verdicts),
        "hardness": score.hardness,
    }


def hardness_from_dict(obj: Mapping) -> HardnessScore:
    try:
        verdicts = obj["judge_verdicts"]
        if not isinstance(verdicts, dict) or not all(
                isinstance(k, str) and isinstance(v, bool) for k, v in verdicts.items()):
            raise TypeError("judge_verdicts must map model names to booleans")
        return HardnessScore(obj["example_id"], verdicts, float(obj["hardness"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolationError(f"bad hardness record: {exc}") from None


def select_hard_cases(scores: Sequence[HardnessScore], k: int) -> list[str]:
    """Ids of the k hardest examples; ties go to the smaller example_id."""
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(scores):
        raise NotEnoughExamplesError(
            f"asked for {k} hard cases from {len(scores)} scores"
        )
    ranked = sorted(scores, key=lambda s: (-s.hardness, s.example_id))
    return [score.example_id for score in ranked[:k]]


# ---------------------------------------------------------------------------
# Response-level judging
# ---------------------------------------------------------------------------

JUDGE_TEMPLATE = """\
Decide whether the response below contains hallucinated content: statements \
that are unsupported by the reference material or factually wrong.

Question: {question}

Reference:
{reference}

Response: {response}

Does the response contain hallucinated content? Answer yes or no.
Answer:"""

_YES = re.compile(r"\byes\b", re.IGNORECASE)
_NO = re.compile(r"\bno\b", re.IGNORECASE)


def render_judge_prompt(example: BenchmarkExample, response_text: str) -> str:
    reference = "\n\n".join(example.references)
    return (JUDGE_TEMPLATE
            .replace("{question}", example.question)
            .replace("{reference}", reference)
            .replace("{response}", response_text))


def parse_yes_no(text: str) -> bool | None:
    """Tolerant yes/no read; None when neither or both words appear."""
    has_yes = bool(_YES.search(text))
    has_no = bool(_NO.search(text))
    if has_yes == has_no:
        return None
    return has_yes


class ResponseJudge:
    """Asks a backend whether a whole response is hallucinated.

    Unparseable replies fall back to ``fallback`` (default: not hallucinated)
    and increment ``parse_failures``.
    """

    def __init__(self, client, backend_id: str, fallback: bool = False,
                 max_tokens: int = 8):
        self._client = client
        self._backend_id = backend_id
        self._fallback = fallback
        self._max_tokens = max_tokens
        self.parse_failures = 0

    def judge_response_level(self, example: BenchmarkExample,
                             response_text: str) -> bool:
        prompt = render_judge_prompt(example, response_text)
        raw = self._client.complete(
            self._backend_id, prompt, max_tokens=self._max_tokens, temperature=0.0)
        verdict = parse_yes_no(raw)
        if verdict is None:
            self.parse_failures += 1
            return self._fallback
        return verdict


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Identifies every input of a run: config, backends, and input files."""

    run_id: str
    config_digest: str
    backend_ids: tuple[str, ...]
    input_digests: Mapping[str, str]
    created_at: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "backend_ids", tuple(self.backend_ids))
        object.__setattr__(self, "input_digests", dict(self.input_digests))


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(config_digest: str, backend_ids: Sequence[str],
                   input_paths: Mapping[str, object]) -> RunManifest:
    """Digest the inputs and derive a deterministic run id from them.

    The run id hashes the config digest, the sorted backend ids, and the
    sorted input digests, so identical inputs always map to the same id;
    ``created_at`` records when this manifest was built and does not feed
    the id.
    """
    input_digests = {str(name): digest_file(path)
                     for name, path in input_paths.items()}
    identity = json.dumps(
        {
            "config": config_digest,
            "backends": sorted(backend_ids),
            "inputs": dict(sorted(input_digests.items())),
        },
        sort_keys=True,
    )
    run_id = digest_text(identity)[:16]
    created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return RunManifest(run_id, config_digest, tuple(backend_ids),
                       input_digests, created_at)


def manifest_to_dict(manifest: RunManifest) -> dict:
    return {
        "run_id": manifest.run_id,
        "config_digest": manifest.config_digest,
        "backend_ids": list(manifest.backend_ids),
        "input_digests": dict(manifest.input_digests),
        "created_at": manifest.created_at,
    }


def write_manifest(path, manifest: RunManifest) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest_to_dict(manifest), handle, indent=2, sort_keys=True)
        handle.write("\n")
