"""Numeric evaluation: rates, pooling, copy rate, classifier scores, correlations.

Everything in this module is a pure function over immutable inputs. Rate and
report arithmetic deliberately sticks to plain Python sums in input order so
results are reproducible bit for bit across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from claimcheck.core import (
    ClaimTriplet,
    EmptyLabelSetError,
    HallucinationLabel,
    LABEL_ORDER,
    severity_max,
)


class EmptyEvaluationError(ValueError):
    """Raised when an evaluation receives no data points."""


class ZeroVarianceError(ValueError):
    """Raised when a correlation input is constant or too short to vary."""


class LengthMismatchError(ValueError):
    """Raised when two paired series differ in length."""


_RATE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ResponseRates:
    """Per-label claim proportions for one response.

    Rates are present exactly when the response carries at least one checked
    claim; a response whose extraction produced zero claims is abstained and
    has no rates.
    """

    entailment_rate: float | None
    neutral_rate: float | None
    contradiction_rate: float | None
    claim_count: int
    abstained: bool

    def __post_init__(self) -> None:
        if self.claim_count < 0:
            raise ValueError("claim_count must be non-negative")
        if self.claim_count == 0:
            if not self.abstained:
                raise ValueError("zero claims requires abstained=True")
            if not (self.entailment_rate is None
                    and self.neutral_rate is None
                    and self.contradiction_rate is None):
                raise ValueError("abstained responses carry no rates")
        else:
            if self.abstained:
                raise ValueError("abstained=True requires zero claims")
            total = (self.entailment_rate + self.neutral_rate + self.contradiction_rate)
            if abs(total - 1.0) > _RATE_SUM_TOL:
                raise ValueError(f"rates must sum to 1, got {total!r}")

    @property
    def hallucination_rate(self) -> float | None:
        """Proportion of claims that are neutral or contradicted."""
        if self.abstained:
            return None
        return self.neutral_rate + self.contradiction_rate

    @property
    def scalar_mean(self) -> float | None:
        """Mean scalar score of the verdicts: entailment +1, neutral 0, contradiction -1."""
        if self.abstained:
            return None
        return self.entailment_rate - self.contradiction_rate


@dataclass(frozen=True)
class ModelReport:
    """Macro-averaged rates for one model over a set of responses.

    Macro rates average per-response proportions over non-abstained responses
    only; abstain_rate is the share of abstained responses among all of them.
    When every response abstained the rate fields are absent.
    """

    model_name: str
    response_count: int
    abstain_rate: float
    entailment_rate: float | None
    neutral_rate: float | None
    contradiction_rate: float | None
    hallucination_rate: float | None
    scalar_mean: float | None


class ExtractorScores(NamedTuple):
    precision: float
    recall: float
    f1: float


class CheckerScores(NamedTuple):
    accuracy: float
    macro_f1: float
    per_class_f1: tuple[float, float, float]


@dataclass(frozen=True)
class ConfusionCounts:
    """3x3 confusion matrix; rows are gold labels, columns predictions.

    Both axes follow the canonical label order (entailment, neutral,
    contradiction).
    """

    matrix: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(int(v) for v in row) for row in self.matrix)
        if len(rows) != 3 or any(len(row) != 3 for row in rows):
            raise ValueError("confusion matrix must be 3x3")
        if any(v < 0 for row in rows for v in row):
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "matrix", rows)

    @property
    def total(self) -> int:
        return sum(v for row in self.matrix for v in row)


class BaselineMethod(str, Enum):
    """Score conventions of evaluators whose outputs we convert to one rate."""

    SELFCHECKGPT = "selfcheckgpt"
    FACTSCORE_FACTOOL = "factscore_factool"
    REFCHECKER = "refchecker"


def response_rates(verdicts: Sequence[HallucinationLabel]) -> ResponseRates:
    """Per-label proportions of one response's claim verdicts; empty list abstains."""
    count = len(verdicts)
    if count == 0:
        return ResponseRates(None, None, None, 0, True)
    tally = {label: 0 for label in LABEL_ORDER}
    for verdict in verdicts:
        tally[verdict] += 1
    return ResponseRates(
        entailment_rate=tally[HallucinationLabel.ENTAILMENT] / count,
        neutral_rate=tally[HallucinationLabel.NEUTRAL] / count,
        contradiction_rate=tally[HallucinationLabel.CONTRADICTION] / count,
        claim_count=count,
        abstained=False,
    )


def model_report(model_name: str, responses: Sequence[ResponseRates]) -> ModelReport:
    """Macro-average per-response rates, excluding abstained responses.

    Abstained responses count only toward abstain_rate. When every response
    abstained, abstain_rate is 1.0 and the rate fields are None.
    """
    if not responses:
        raise EmptyEvaluationError("model_report needs at least one response")
    scored = [r for r in responses if not r.abstained]
    abstain_rate = (len(responses) - len(scored)) / len(responses)
    if not scored:
        return ModelReport(
            model_name=model_name,
            response_count=len(responses),
            abstain_rate=abstain_rate,
            entailment_rate=None,
            neutral_rate=None,
            contradiction_rate=None,
            hallucination_rate=None,
            scalar_mean=None,
        )
    n = len(scored)
    return ModelReport(
        model_name=model_name,
        response_count=len(responses),
        abstain_rate=abstain_rate,
        entailment_rate=sum(r.entailment_rate for r in scored) / n,
        neutral_rate=sum(r.neutral_rate for r in scored) / n,
        contradiction_rate=sum(r.contradiction_rate for r in scored) / n,
        hallucination_rate=sum(r.hallucination_rate for r in scored) / n,
        scalar_mean=sum(r.scalar_mean for r in scored) / n,
    )


def pool_to_response(verdicts: Sequence[HallucinationLabel]) -> HallucinationLabel:
    """Collapse claim verdicts to one response-level verdict by severity max-pooling."""
    if not verdicts:
        raise EmptyLabelSetError("cannot pool an empty verdict list")
    return severity_max(verdicts)


def _alnum_tokens(text: str) -> list[str]:
    """Lowercase tokens; every non-alphanumeric character is a separator."""
    tokens: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def copy_rate(claim: ClaimTriplet, context: str) -> float:
    """Fraction of claim n-grams (n = 1..4) found contiguously in the context.

    rate_n is computed for each n not exceeding the claim's token count; the
    result is the plain mean of the available rate_n values. A claim with no
    alphanumeric tokens has nothing to look up and scores 0.
    """
    claim_tokens = _alnum_tokens(claim.as_sentence())
    context_tokens = _alnum_tokens(context)
    rates: list[float] = []
    for n in range(1, 5):
        if len(claim_tokens) < n:
            break
        claim_grams = [tuple(claim_tokens[i:i + n]) for i in range(len(claim_tokens) - n + 1)]
        context_grams = {
            tuple(context_tokens[i:i + n]) for i in range(len(context_tokens) - n + 1)
        }
        hits = sum(1 for gram in claim_grams if gram in context_grams)
        rates.append(hits / len(claim_grams))
    if not rates:
        return 0.0
    return sum(rates) / len(rates)


def confusion_counts(
    gold: Sequence[HallucinationLabel], predicted: Sequence[HallucinationLabel]
) -> ConfusionCounts:
    """Tally a 3x3 confusion matrix from aligned gold and predicted labels."""
    if len(gold) != len(predicted):
        raise LengthMismatchError(
            f"{len(gold)} gold labels vs {len(predicted)} predictions"
        )
    index = {label: i for i, label in enumerate(LABEL_ORDER)}
    matrix = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    for g, p in zip(gold, predicted):
        matrix[index[g]][index[p]] += 1
    return ConfusionCounts(tuple(tuple(row) for row in matrix))


def checker_scores(counts: ConfusionCounts) -> CheckerScores:
    """Accuracy and per-class/macro F1 over a 3-way confusion matrix.

    Precision, recall, and F1 with a zero denominator are defined as 0, so a
    checker that never predicts some class still gets a score.
    """
    total = counts.total
    if total == 0:
        raise EmptyEvaluationError("confusion matrix is empty")
    matrix = counts.matrix
    accuracy = sum(matrix[i][i] for i in range(3)) / total
    f1s = []
    for i in range(3):
        col_sum = sum(matrix[r][i] for r in range(3))
        row_sum = sum(matrix[i][c] for c in range(3))
        precision = matrix[i][i] / col_sum if col_sum else 0.0
        recall = matrix[i][i] / row_sum if row_sum else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    per_class = (f1s[0], f1s[1], f1s[2])
    return CheckerScores(accuracy, sum(f1s) / 3, per_class)


def extractor_scores(flags: Sequence[bool], missing_count: int) -> ExtractorScores:
    """Precision/recall/F1 for claim extraction.

    ``flags`` marks each extracted claim correct (True) or not; missing_count
    is how many reference claims the extractor failed to produce.
    """
    if missing_count < 0:
        raise ValueError("missing_count must be non-negative")
    true_count = sum(1 for f in flags if f)
    precision = true_count / len(flags) if flags else 0.0
    recall_denom = true_count + missing_count
    recall = true_count / recall_denom if recall_denom else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ExtractorScores(precision, recall, f1)


def baseline_hallucination_rate(method: BaselineMethod | str, inputs: Sequence) -> float:
    """Convert one response's scores from a known evaluator into a hallucination rate.

    selfcheckgpt: per-sentence scores from {0, 0.5, 1}, averaged.
    factscore_factool: per-claim supported flags; rate = share of unsupported.
    refchecker: per-claim verdict labels; rate = share of neutral + contradiction.
    """
    method = BaselineMethod(method)
    if not inputs:
        raise EmptyEvaluationError(f"no inputs for {method.value}")
    if method is BaselineMethod.SELFCHECKGPT:
        for score in inputs:
            if score not in (0, 0.5, 1):
                raise ValueError(f"selfcheckgpt sentence score must be 0, 0.5 or 1, got {score!r}")
        return sum(inputs) / len(inputs)
    if method is BaselineMethod.FACTSCORE_FACTOOL:
        unsupported = sum(1 for supported in inputs if not supported)
        return unsupported / len(inputs)
    labels = [HallucinationLabel(v) for v in inputs]
    flagged = sum(1 for v in labels if v is not HallucinationLabel.ENTAILMENT)
    return flagged / len(labels)


def _check_paired(xs: Sequence[float], ys: Sequence[float]) -> None:
    if len(xs) != len(ys):
        raise LengthMismatchError(f"series lengths differ: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ZeroVarianceError("correlation needs at least two observations")


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient, clamped to [-1, 1]."""
    _check_paired(xs, ys)
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(np.sum(xc * xc))
    vy = float(np.sum(yc * yc))
    # sqrt of the product, not the product of sqrts: keeps r exactly +-1.0
    # for exactly linear inputs with representable sums of squares
    denom = float(np.sqrt(vx * vy))
    if vx == 0.0 or vy == 0.0 or denom == 0.0:
        raise ZeroVarianceError("cannot correlate a constant series")
    r = float(np.sum(xc * yc)) / denom
    return max(-1.0, min(1.0, r))


def _average_ranks(values: Sequence[float]) -> list[float]:
    """Fractional ranks starting at 1; tied values share the mean of their positions."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson over average ranks."""
    _check_paired(xs, ys)
    return pearson(_average_ranks(xs), _average_ranks(ys))


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def model_report_to_dict(report: ModelReport) -> dict:
    return {
        "model_name": report.model_name,
        "response_count": report.response_count,
        "abstain_rate": report.abstain_rate,
        "entailment_rate": report.entailment_rate,
        "neutral_rate": report.neutral_rate,
        "contradiction_rate": report.contradiction_rate,
        "hallucination_rate": report.hallucination_rate,
        "scalar_mean": report.scalar_mean,
    }


def response_rates_to_dict(rates: ResponseRates) -> dict:
    out: dict = {"claim_count": rates.claim_count, "abstained": rates.abstained}
    if not rates.abstained:
        out.update(
            entailment_rate=rates.entailment_rate,
            neutral_rate=rates.neutral_rate,
            contradiction_rate=rates.contradiction_rate,
            hallucination_rate=rates.hallucination_rate,
            scalar_mean=rates.scalar_mean,
        )
    return out


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def render_report_table(reports: Sequence[ModelReport]) -> str:
    """Aligned plain-text table, one row per model, in the given order."""
    header = ["model", "responses", "abstain", "entailment", "neutral",
              "contradiction", "hallucination", "scalar"]
    rows = [header]
    for r in reports:
        rows.append([
            r.model_name,
            str(r.response_count),
            f"{r.abstain_rate:.4f}",
            _cell(r.entailment_rate),
            _cell(r.neutral_rate),
            _cell(r.contradiction_rate),
            _cell(r.hallucination_rate),
            _cell(r.scalar_mean),
        ])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"
