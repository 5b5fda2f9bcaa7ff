"""Claim extraction: prompt an LLM backend, parse its output into triplets.

The output grammar is fixed here, not by any model: one claim per line,
canonical form ("head", "relation", "tail"). Parsing is deliberately tolerant
(bullets, numbering, pipe delimiters, sloppy quoting) and total: a malformed
candidate line becomes a rejected-line entry, never an exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from claimcheck.core import ClaimTriplet

_QUOTE_CHARS = '"\''
_DELIMS = ",|"


class EmptyResponseError(ValueError):
    """Raised when asked to extract claims from an empty response."""


@dataclass(frozen=True)
class Demonstration:
    """One in-context example: a question, a response, and its gold triplets."""

    question: str
    response: str
    claims: tuple[ClaimTriplet, ...]


@dataclass(frozen=True)
class ExtractionPromptTemplate:
    """Structured extraction prompt: preamble plus in-context demonstrations.

    Demonstration count is data, not code: zero demonstrations is a valid
    template for backends fine-tuned on the task.
    """

    preamble: str
    demonstrations: tuple[Demonstration, ...] = ()


@dataclass(frozen=True)
class FileExtractionTemplate:
    """Free-form template text with {question} and {response} placeholders."""

    text: str

    def __post_init__(self) -> None:
        if "{response}" not in self.text:
            raise ValueError("template file must contain a {response} placeholder")


@dataclass(frozen=True)
class ExtractionResult:
    """Accepted claims plus an audit trail of every dropped candidate line."""

    claims: tuple[ClaimTriplet, ...]
    rejected_lines: tuple[tuple[str, str], ...] = ()


DEFAULT_TEMPLATE = ExtractionPromptTemplate(
    preamble=(
        "Break the response into independent factual claims. Write one claim per "
        'line as a knowledge triplet ("head", "relation", "tail"). Use only '
        "information stated in the response. Output the triplet lines and nothing else."
    ),
    demonstrations=(
        Demonstration(
            question="Who developed the theory of general relativity?",
            response=(
                "General relativity was developed by Albert Einstein. "
                "He published the theory in 1915."
            ),
            claims=(
                ClaimTriplet("general relativity", "was developed by", "Albert Einstein"),
                ClaimTriplet("Albert Einstein", "published general relativity in", "1915"),
            ),
        ),
        Demonstration(
            question="What is the capital of Australia?",
            response="The capital of Australia is Sydney, which is also its largest city.",
            claims=(
                ClaimTriplet("the capital of Australia", "is", "Sydney"),
                ClaimTriplet("Sydney", "is", "the largest city of Australia"),
            ),
        ),
    ),
)


def load_template(path) -> FileExtractionTemplate:
    """Load a plain-text extraction template with {question}/{response} slots."""
    with open(path, "r", encoding="utf-8") as handle:
        return FileExtractionTemplate(handle.read())


def _render_block(question: str, response: str, claims_text: str) -> str:
    parts = []
    if question.strip():
        parts.append(f"Question:\n{question}\n")
    parts.append(f"Response:\n{response}\n")
    parts.append(f"Claims:\n{claims_text}")
    return "\n".join(parts)


def render_extraction_prompt(
    template: ExtractionPromptTemplate | FileExtractionTemplate,
    question: str,
    response: str,
) -> str:
    """Render the full extraction prompt for one (question, response) pair.

    An empty question simply drops the question block; an empty response is an
    error because there is nothing to extract from.
    """
    if not response.strip():
        raise EmptyResponseError("cannot extract claims from an empty response")
    if isinstance(template, FileExtractionTemplate):
        return template.text.replace("{question}", question).replace("{response}", response)
    blocks = [template.preamble.rstrip()]
    for demo in template.demonstrations:
        claims_text = serialize_claims(demo.claims) + "\n"
        blocks.append(_render_block(demo.question, demo.response, claims_text))
    blocks.append(_render_block(question, response, ""))
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {"\\": "\\", '"': '"', "'": "'", "n": "\n", "r": "\r", "t": "\t"}


def _escape(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text) and text[i + 1] in _UNESCAPES:
            out.append(_UNESCAPES[text[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def serialize_triplet(triplet: ClaimTriplet) -> str:
    """Render one claim in the canonical one-line form."""
    return (
        f'("{_escape(triplet.head)}", "{_escape(triplet.relation)}", '
        f'"{_escape(triplet.tail)}")'
    )


def serialize_claims(claims) -> str:
    return "\n".join(serialize_triplet(c) for c in claims)


# ---------------------------------------------------------------------------
# Tolerant parsing
# ---------------------------------------------------------------------------

_BULLET = re.compile(r"^\s*(?:[-*•]+\s*)?(?:\d{1,4}\s*[.):]\s*)?")


def _strip_bullet(line: str) -> str:
    return _BULLET.sub("", line, count=1).strip()


def is_candidate_line(line: str) -> bool:
    """A non-blank line is a triplet candidate if, after an optional bullet or
    numbering prefix, it opens a parenthesis or uses the pipe delimiter.
    Everything else is prose and is ignored."""
    body = _strip_bullet(line)
    return body.startswith("(") or "|" in body


def _split_top_level(content: str) -> list[str]:
    """Split on the field delimiter, honoring quoted fields.

    A quote opens a field only at a field boundary, and closes it only right
    before a delimiter or the end, so apostrophes inside unquoted text stay
    literal. Backslash escapes the next character inside quotes. The delimiter
    is '|' when one appears outside quotes, ',' otherwise.
    """
    quote: str | None = None
    at_boundary = True
    # first pass: find which characters sit outside quotes
    i = 0
    n = len(content)
    outside = [True] * n
    while i < n:
        ch = content[i]
        if quote is None:
            if ch in _QUOTE_CHARS and at_boundary:
                quote = ch
                outside[i] = False
            elif ch in _DELIMS:
                at_boundary = True
            elif not ch.isspace():
                at_boundary = False
        else:
            outside[i] = False
            if ch == "\\" and i + 1 < n:
                outside[i + 1] = False
                i += 2
                continue
            if ch == quote:
                rest = content[i + 1:]
                lead = rest.lstrip()
                if lead == "" or lead[0] in _DELIMS:
                    quote = None
                    at_boundary = False
        i += 1
    delim = "|" if any(c == "|" and outside[k] for k, c in enumerate(content)) else ","
    segments: list[list[str]] = [[]]
    for k, ch in enumerate(content):
        if ch == delim and outside[k]:
            segments.append([])
        else:
            segments[-1].append(ch)
    return ["".join(seg) for seg in segments]


def _well_quoted(interior: str, quote: str) -> bool:
    i = 0
    while i < len(interior):
        ch = interior[i]
        if ch == "\\":
            i += 2
            continue
        if ch == quote:
            return False
        i += 1
    return True


def _clean_field(segment: str) -> str:
    s = segment.strip()
    if len(s) >= 2 and s[0] in _QUOTE_CHARS and s[-1] == s[0] and _well_quoted(s[1:-1], s[0]):
        return _unescape(s[1:-1]).strip()
    return s.strip(_QUOTE_CHARS + " \t").strip()


def _parse_candidate(body: str) -> ClaimTriplet | str:
    """Parse one candidate line body; returns a triplet or a reject reason."""
    content = body
    if content.startswith("("):
        close = content.rfind(")")
        if close == -1:
            return "unbalanced parentheses"
        content = content[1:close]
    fields = [_clean_field(seg) for seg in _split_top_level(content)]
    if len(fields) != 3:
        return f"arity {len(fields)} ≠ 3"
    if any(not f for f in fields):
        return "empty field"
    try:
        return ClaimTriplet(head=fields[0], relation=fields[1], tail=fields[2])
    except (TypeError, ValueError) as exc:
        return str(exc)


def parse_triplets(raw: str) -> ExtractionResult:
    """Scan backend output line by line for claim triplets.

    Total function: every candidate line either yields a claim or lands in
    rejected_lines with a reason; prose and blank lines are skipped.
    """
    claims: list[ClaimTriplet] = []
    rejected: list[tuple[str, str]] = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        if not is_candidate_line(line):
            continue
        outcome = _parse_candidate(_strip_bullet(line))
        if isinstance(outcome, ClaimTriplet):
            claims.append(outcome)
        else:
            rejected.append((line, outcome))
    return ExtractionResult(claims=tuple(claims), rejected_lines=tuple(rejected))


class Extractor:
    """Extracts claim triplets from responses via a completion backend."""

    def __init__(self, client, backend_id: str, template=None, max_tokens: int = 1024):
        self._client = client
        self._backend_id = backend_id
        self._template = template if template is not None else DEFAULT_TEMPLATE
        self._max_tokens = max_tokens

    def extract(self, question: str, response: str) -> ExtractionResult:
        """Prompt the backend at temperature 0 and parse its reply.

        An empty claim list is a valid outcome: the response abstained.
        """
        prompt = render_extraction_prompt(self._template, question, response)
        raw = self._client.complete(
            self._backend_id, prompt, max_tokens=self._max_tokens, temperature=0.0
        )
        return parse_triplets(raw)
