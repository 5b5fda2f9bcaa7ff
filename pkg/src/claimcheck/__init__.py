"""Claim-level hallucination checking for LLM responses."""

from claimcheck.core import (
    BenchmarkExample,
    ClaimTriplet,
    ContextSetting,
    HallucinationLabel,
    ResponseRecord,
    scalar_score,
    severity_max,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkExample",
    "ClaimTriplet",
    "ContextSetting",
    "HallucinationLabel",
    "ResponseRecord",
    "scalar_score",
    "severity_max",
    "__version__",
]
