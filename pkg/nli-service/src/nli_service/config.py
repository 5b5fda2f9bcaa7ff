"""Service configuration: model identifier, listen address, request limits."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

CANONICAL_LABELS = ("entailment", "neutral", "contradiction")

_BUILTIN_PREFIX = "builtin:"


class ConfigError(ValueError):
    """Raised when the service configuration is malformed."""


@dataclass(frozen=True)
class NliServiceConfig:
    """Immutable service settings.

    model_path names the weights to serve: either a filesystem path or a
    "builtin:<name>" identifier resolved against the weights shipped with the
    package. label_order declares the order of the model's three output
    logits so the service can map them to the canonical
    (entailment, neutral, contradiction) wire order.
    """

    model_path: str = _BUILTIN_PREFIX + "tiny-nli-v1"
    host: str = "127.0.0.1"
    port: int = 8080
    max_premise_tokens: int = 96
    max_hypothesis_tokens: int = 48
    emit_representations: bool = False
    enable_complete_echo: bool = True
    workers: int = 1
    label_order: tuple[str, str, str] = CANONICAL_LABELS

    def __post_init__(self) -> None:
        if not self.model_path:
            raise ConfigError("model_path must be non-empty")
        if self.max_premise_tokens < 1 or self.max_hypothesis_tokens < 1:
            raise ConfigError("max premise/hypothesis token limits must be positive")
        if not 0 < self.port < 65536:
            raise ConfigError(f"port must be in 1..65535, got {self.port}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        order = tuple(self.label_order)
        if sorted(order) != sorted(CANONICAL_LABELS):
            raise ConfigError(
                f"label_order must be a permutation of {CANONICAL_LABELS}, "
                f"got {order!r}"
            )
        object.__setattr__(self, "label_order", order)

    def resolve_model_path(self, base_dir: Path | None = None) -> Path:
        """Resolve the model identifier to a weights file on disk."""
        if self.model_path.startswith(_BUILTIN_PREFIX):
            name = self.model_path[len(_BUILTIN_PREFIX):]
            packaged = resources.files("nli_service") / "weights" / f"{name}.npz"
            with resources.as_file(packaged) as concrete:
                path = Path(concrete)
            if not path.is_file():
                raise ConfigError(f"unknown builtin model {name!r}")
            return path
        path = Path(self.model_path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"model weights not found at {path}")
        return path


def load_config(path: str | Path) -> NliServiceConfig:
    """Parse a JSON config file; unknown keys are rejected."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(NliServiceConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "label_order" in raw:
        if not isinstance(raw["label_order"], list):
            raise ConfigError("label_order must be a list of three labels")
        raw["label_order"] = tuple(raw["label_order"])
    try:
        return NliServiceConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
