"""Command-line entry point for the claim-checking pipeline.

Subcommands cover the full flow: extract claims from responses, check them
against references, aggregate reports, evaluate the extractor, train and run
representation classifiers, score hard cases, pool granularities, and filter
examples. Every run is driven by one declarative JSON config; flags only
carry paths and --parallelism, so a manifest plus the config identifies the
whole run.

Exit codes: 0 success, 2 I/O, 3 validation, 4 backend failure. Failures
print one machine-readable JSON object to stderr: {"error", "message"} and,
for line-addressable input problems, "line".
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from claimcheck.backend import (
    BackendClient,
    BackendSpec,
    BackendUnreachableError,
    MalformedBackendReplyError,
)
from claimcheck.benchmark import (
    HardnessScore,
    ResponseJudge,
    build_manifest,
    digest_text,
    hardness_to_dict,
    parse_yes_no,
    render_judge_prompt,
    select_hard_cases,
    write_manifest,
)
from claimcheck.checker import AllCallsFailedError, CheckerKind, build_checker
from claimcheck.core import (
    BenchmarkExample,
    HallucinationLabel,
    LABEL_ORDER,
    ResponseRecord,
    SchemaViolationError,
    example_from_dict,
    example_to_dict,
    load_records,
    read_jsonl,
    record_to_dict,
    write_jsonl,
)
from claimcheck.extractor import Extractor, load_template, serialize_claims
from claimcheck.metrics import (
    LengthMismatchError,
    ZeroVarianceError,
    checker_scores,
    confusion_counts,
    extractor_scores,
    model_report,
    model_report_to_dict,
    pearson,
    pool_to_response,
    render_report_table,
    response_rates,
    spearman,
)
from claimcheck.repc import (
    group_by_pair,
    load_model,
    load_representations,
    save_model,
    train_repc,
)

EXIT_OK = 0
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_BACKEND = 4

_BACKEND_FAILURES = (
    BackendUnreachableError,
    MalformedBackendReplyError,
    AllCallsFailedError,
)


class ConfigError(ValueError):
    """Raised when the run config is missing or inconsistent."""


class MissingVerdictsError(ValueError):
    """Raised when a report input record has claims but no verdicts."""


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """One declarative run configuration plus the digest of its source text."""

    backends: Mapping[str, BackendSpec]
    extractor_backend: str | None
    extractor_template: str | None
    extractor_max_tokens: int
    checker_kind: CheckerKind
    checker_backend: str | None
    checker_fallback: HallucinationLabel
    checker_chunk_size: int
    checker_max_tokens: int
    judge_backend: str | None
    judge_fallback: bool
    repc_kind: str
    repc_mode: str
    repc_hyperparams: Mapping
    parallelism: int
    cache_dir: str | None
    seed: int
    digest: str

    def require_backend(self, backend_id: str | None, role: str) -> str:
        if backend_id is None:
            raise ConfigError(f"config does not name a {role} backend")
        return backend_id


def _config_backend(config_obj: Mapping, section: str, registry: Mapping) -> str | None:
    sec = config_obj.get(section)
    if sec is None:
        return None
    backend_id = sec.get("backend")
    if backend_id is None:
        raise ConfigError(f"config section {section!r} lacks a backend id")
    if backend_id not in registry:
        raise ConfigError(
            f"config section {section!r} references unknown backend {backend_id!r}"
        )
    return backend_id


def parse_config(text: str) -> RunConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    raw_backends = obj.get("backends", {})
    if not isinstance(raw_backends, dict):
        raise ConfigError("backends must map ids to endpoint objects")
    backends = {}
    for backend_id, spec in raw_backends.items():
        if not isinstance(spec, dict) or "base_url" not in spec:
            raise ConfigError(f"backend {backend_id!r} needs a base_url")
        backends[backend_id] = BackendSpec(
            backend_id=backend_id,
            base_url=spec["base_url"],
            auth_token_env=spec.get("auth_env"),
        )
    extractor = obj.get("extractor", {}) or {}
    checker = obj.get("checker", {}) or {}
    judge = obj.get("judge", {}) or {}
    repc = obj.get("repc", {}) or {}
    parallelism = obj.get("parallelism", 1)
    if not isinstance(parallelism, int) or parallelism < 1:
        raise ConfigError("parallelism must be an integer >= 1")
    try:
        checker_kind = CheckerKind(checker.get("kind", "prompted_llm"))
        fallback = HallucinationLabel(checker.get("fallback_label", "neutral"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        backends=backends,
        extractor_backend=_config_backend(obj, "extractor", backends),
        extractor_template=extractor.get("template_path"),
        extractor_max_tokens=extractor.get("max_tokens", 1024),
        checker_kind=checker_kind,
        checker_backend=_config_backend(obj, "checker", backends),
        checker_fallback=fallback,
        checker_chunk_size=checker.get("chunk_size_tokens", 200),
        checker_max_tokens=checker.get("max_tokens", 32),
        judge_backend=_config_backend(obj, "judge", backends),
        judge_fallback=bool(judge.get("fallback", False)),
        repc_kind=repc.get("kind", "knn"),
        repc_mode=repc.get("mode", "layer_select"),
        repc_hyperparams=repc.get("hyperparams", {}),
        parallelism=parallelism,
        cache_dir=obj.get("cache_dir"),
        seed=obj.get("seed", 17),
        digest=digest_text(text),
    )


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def build_client(config: RunConfig, parallelism: int | None = None) -> BackendClient:
    return BackendClient(
        config.backends,
        cache_dir=config.cache_dir,
        parallelism=parallelism if parallelism is not None else config.parallelism,
    )


# ---------------------------------------------------------------------------
# Shared input helpers
# ---------------------------------------------------------------------------


def _read_examples_map(path) -> dict[str, BenchmarkExample]:
    """Examples keyed by id, any mix of settings, duplicates rejected."""
    examples: dict[str, BenchmarkExample] = {}
    for line_number, obj in read_jsonl(path):
        try:
            example = example_from_dict(obj)
        except SchemaViolationError as exc:
            raise SchemaViolationError(str(exc), line=line_number) from None
        if example.id in examples:
            raise SchemaViolationError(
                f"duplicate example id {example.id!r}", line=line_number)
        examples[example.id] = example
    return examples


def _example_for(record: ResponseRecord,
                 examples: Mapping[str, BenchmarkExample]) -> BenchmarkExample:
    example = examples.get(record.example_id)
    if example is None:
        raise SchemaViolationError(
            f"record {record.id!r} references unknown example {record.example_id!r}"
        )
    return example


def _record_verdicts(record: ResponseRecord) -> tuple[HallucinationLabel, ...]:
    """Verdicts for rating; abstained records count as an empty verdict list."""
    if record.verdicts is not None:
        return record.verdicts
    if record.claims is not None and len(record.claims) == 0:
        return ()
    raise MissingVerdictsError(
        f"record {record.id!r} has no verdicts; run the check command first"
    )


def _write_record_manifest(config: RunConfig, backend_ids: Sequence[str],
                           inputs: Mapping[str, object], out_path) -> None:
    manifest = build_manifest(config.digest, backend_ids, inputs)
    write_manifest(str(out_path) + ".manifest.json", manifest)


# ---------------------------------------------------------------------------
# extract / check
# ---------------------------------------------------------------------------


def cmd_extract(config: RunConfig, examples_path, responses_path, out_path,
                parallelism: int | None = None) -> int:
    backend_id = config.require_backend(config.extractor_backend, "extractor")
    examples = _read_examples_map(examples_path)
    records = load_records(responses_path)
    for record in records:
        _example_for(record, examples)
    client = build_client(config, parallelism)
    template = (load_template(config.extractor_template)
                if config.extractor_template else None)
    extractor = Extractor(client, backend_id, template=template,
                          max_tokens=config.extractor_max_tokens)

    def run_one(record: ResponseRecord):
        example = examples[record.example_id]
        result = extractor.extract(example.question, record.response_text)
        return record.with_claims(result.claims), len(result.rejected_lines)

    outcomes = client.map_parallel(run_one, records)
    extracted = [record for record, _ in outcomes]
    claim_count = sum(len(record.claims) for record in extracted)
    rejected = sum(count for _, count in outcomes)
    abstained = sum(1 for record in extracted if record.abstained)
    write_jsonl(out_path, (record_to_dict(record) for record in extracted))
    _write_record_manifest(config, [backend_id],
                           {"examples": examples_path, "responses": responses_path},
                           out_path)
    print(f"responses: {len(extracted)}")
    print(f"claims: {claim_count}")
    print(f"rejected_lines: {rejected}")
    print(f"abstained: {abstained}")
    return EXIT_OK


def cmd_check(config: RunConfig, records_path, examples_path, out_path,
              parallelism: int | None = None) -> int:
    backend_id = config.require_backend(config.checker_backend, "checker")
    examples = _read_examples_map(examples_path)
    records = load_records(records_path)
    for record in records:
        _example_for(record, examples)
    client = build_client(config, parallelism)
    checker = build_checker(
        config.checker_kind, client, backend_id,
        chunk_size_tokens=config.checker_chunk_size,
        fallback_label=config.checker_fallback,
        max_tokens=config.checker_max_tokens,
    )

    def run_one(record: ResponseRecord):
        return checker.check_response_detailed(record, examples[record.example_id])

    outcomes = client.map_parallel(run_one, records)
    checked = [record for record, _ in outcomes]
    distribution = {label: 0 for label in LABEL_ORDER}
    parse_failures = 0
    for _, verdicts in outcomes:
        for verdict in verdicts:
            distribution[verdict.label] += 1
            parse_failures += verdict.parse_failures
    write_jsonl(out_path, (record_to_dict(record) for record in checked))
    _write_record_manifest(config, [backend_id],
                           {"records": records_path, "examples": examples_path},
                           out_path)
    for label in LABEL_ORDER:
        print(f"{label.value}: {distribution[label]}")
    print(f"parse_failures: {parse_failures}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _load_model_records(records_by_model: Mapping[str, object]
                        ) -> dict[str, list[ResponseRecord]]:
    loaded: dict[str, list[ResponseRecord]] = {}
    for name, path in records_by_model.items():
        records = load_records(path)
        if not records:
            raise MissingVerdictsError(f"records file for {name!r} is empty")
        for record in records:
            if record.model_name != name:
                raise SchemaViolationError(
                    f"record {record.id!r} names model {record.model_name!r}, "
                    f"expected {name!r}"
                )
        loaded[name] = records
    return loaded


def _safe_correlations(xs: Sequence[float], ys: Sequence[float]) -> dict:
    out: dict = {"points": len(xs)}
    try:
        out["pearson"] = pearson(xs, ys)
        out["spearman"] = spearman(xs, ys)
    except (ZeroVarianceError, LengthMismatchError) as exc:
        out["pearson"] = None
        out["spearman"] = None
        out["note"] = str(exc)
    return out


def _ranking(reports: Mapping[str, dict], key: str) -> list[str]:
    """Model names, highest rate first; abstain-only models excluded."""
    rated = [(name, rep[key]) for name, rep in reports.items()
             if rep.get(key) is not None]
    rated.sort(key=lambda pair: (-pair[1], pair[0]))
    return [name for name, _ in rated]


def cmd_report(records_by_model: Mapping[str, object], gold_path, out_dir,
               examples_path=None) -> int:
    if not records_by_model:
        raise ConfigError("report needs at least one model's records")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_model = _load_model_records(records_by_model)
    examples = _read_examples_map(examples_path) if examples_path else None

    reports: dict[str, dict] = {}
    tables = []
    for name in sorted(by_model):
        records = by_model[name]
        rates = [response_rates(_record_verdicts(r)) for r in records]
        report = model_report(name, rates)
        reports[name] = model_report_to_dict(report)
        tables.append((name, report, records))

    per_setting: dict[str, dict[str, dict]] = {}
    if examples is not None:
        for name, _, records in tables:
            for record in records:
                _example_for(record, examples)
        settings = sorted({example.setting.value for example in examples.values()})
        for setting in settings:
            setting_reports = {}
            for name, _, records in tables:
                subset = [r for r in records
                          if examples[r.example_id].setting.value == setting]
                if subset:
                    rep = model_report(name, [response_rates(_record_verdicts(r))
                                              for r in subset])
                    setting_reports[name] = model_report_to_dict(rep)
            if setting_reports:
                per_setting[setting] = setting_reports

    rankings = {
        "entailment_rate": _ranking(reports, "entailment_rate"),
        "contradiction_rate": _ranking(reports, "contradiction_rate"),
        "hallucination_rate": _ranking(reports, "hallucination_rate"),
    }

    eval_section = None
    if gold_path is not None:
        gold_by_id = {}
        for record in load_records(gold_path):
            if record.id in gold_by_id:
                raise SchemaViolationError(f"duplicate gold record id {record.id!r}")
            gold_by_id[record.id] = record
        gold_labels: list[HallucinationLabel] = []
        predicted_labels: list[HallucinationLabel] = []
        response_level: dict[str, dict] = {}
        model_pred_rates: dict[str, float] = {}
        model_gold_rates: dict[str, float] = {}
        for name in sorted(by_model):
            xs: list[float] = []
            ys: list[float] = []
            gold_rate_list = []
            for record in by_model[name]:
                gold = gold_by_id.get(record.id)
                if gold is None:
                    raise SchemaViolationError(
                        f"gold file lacks record {record.id!r}")
                pred_verdicts = _record_verdicts(record)
                gold_verdicts = _record_verdicts(gold)
                if len(pred_verdicts) != len(gold_verdicts):
                    raise SchemaViolationError(
                        f"record {record.id!r}: {len(pred_verdicts)} predicted "
                        f"verdicts vs {len(gold_verdicts)} gold verdicts"
                    )
                predicted_labels.extend(pred_verdicts)
                gold_labels.extend(gold_verdicts)
                pred_rates = response_rates(pred_verdicts)
                gold_rates = response_rates(gold_verdicts)
                gold_rate_list.append(gold_rates)
                if not pred_rates.abstained and not gold_rates.abstained:
                    xs.append(pred_rates.hallucination_rate)
                    ys.append(gold_rates.hallucination_rate)
            response_level[name] = _safe_correlations(xs, ys)
            pred_report = model_report(name, [response_rates(_record_verdicts(r))
                                              for r in by_model[name]])
            gold_report = model_report(name, gold_rate_list)
            if (pred_report.hallucination_rate is not None
                    and gold_report.hallucination_rate is not None):
                model_pred_rates[name] = pred_report.hallucination_rate
                model_gold_rates[name] = gold_report.hallucination_rate
        if not gold_labels:
            raise MissingVerdictsError("gold comparison found no aligned claims")
        scores = checker_scores(confusion_counts(gold_labels, predicted_labels))
        eval_section = {
            "checker": {
                "accuracy": scores.accuracy,
                "macro_f1": scores.macro_f1,
                "per_class_f1": {
                    label.value: scores.per_class_f1[i]
                    for i, label in enumerate(LABEL_ORDER)
                },
                "claims": len(gold_labels),
            },
            "response_level": response_level,
        }
        if len(model_pred_rates) >= 2:
            names = sorted(model_pred_rates)
            eval_section["model_level"] = _safe_correlations(
                [model_pred_rates[n] for n in names],
                [model_gold_rates[n] for n in names])
        else:
            eval_section["model_level"] = None

    report_doc: dict = {"models": reports, "rankings": rankings}
    if per_setting:
        report_doc["settings"] = per_setting
    if eval_section is not None:
        report_doc["eval"] = eval_section

    text = _render_report_text(tables, per_setting, rankings, eval_section)
    (out_dir / "report.json").write_text(
        json.dumps(report_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    inputs = {f"records:{name}": path for name, path in records_by_model.items()}
    if gold_path is not None:
        inputs["gold"] = gold_path
    if examples_path is not None:
        inputs["examples"] = examples_path
    write_manifest(out_dir / "manifest.json", build_manifest("", [], inputs))
    print(text, end="")
    return EXIT_OK


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.4f}"


def _render_report_text(tables, per_setting, rankings, eval_section) -> str:
    lines = [render_report_table([report for _, report, _ in tables]).rstrip("\n")]
    for setting in sorted(per_setting):
        lines.append("")
        lines.append(f"Setting: {setting}")
        for name in sorted(per_setting[setting]):
            rep = per_setting[setting][name]
            lines.append(
                f"  {name}  E {_fmt(rep['entailment_rate'])}  "
                f"N {_fmt(rep['neutral_rate'])}  C {_fmt(rep['contradiction_rate'])}  "
                f"halluc {_fmt(rep['hallucination_rate'])}  "
                f"abstain {rep['abstain_rate']:.4f}"
            )
    lines.append("")
    lines.append("Ranking by entailment rate: "
                 + (" > ".join(rankings["entailment_rate"]) or "(none)"))
    lines.append("Ranking by contradiction rate: "
                 + (" > ".join(rankings["contradiction_rate"]) or "(none)"))
    lines.append("Ranking by hallucination rate: "
                 + (" > ".join(rankings["hallucination_rate"]) or "(none)"))
    if eval_section is not None:
        checker = eval_section["checker"]
        lines.append("")
        lines.append("Checker evaluation vs gold:")
        lines.append(f"  accuracy {checker['accuracy']:.4f}  "
                     f"macro_f1 {checker['macro_f1']:.4f}  "
                     f"claims {checker['claims']}")
        per_class = checker["per_class_f1"]
        lines.append("  per-class F1: "
                     + "  ".join(f"{label.value} {per_class[label.value]:.4f}"
                                 for label in LABEL_ORDER))
        lines.append("  response-level correlation (hallucination rate vs gold):")
        for name in sorted(eval_section["response_level"]):
            corr = eval_section["response_level"][name]
            lines.append(
                f"    {name}: pearson {_fmt(corr['pearson'])}  "
                f"spearman {_fmt(corr['spearman'])}  points {corr['points']}"
            )
        model_level = eval_section.get("model_level")
        if model_level is not None:
            lines.append(
                f"  model-level correlation: pearson {_fmt(model_level['pearson'])}  "
                f"spearman {_fmt(model_level['spearman'])}  "
                f"points {model_level['points']}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# eval-extractor
# ---------------------------------------------------------------------------

CLAIM_FLAG_TEMPLATE = """\
Decide whether the claim below is a faithful statement of something the \
response says. Judge only faithfulness to the response text.

Response: {response}

Claim: {claim}

Is the claim faithful to the response? Answer yes or no.
Answer:"""

MISSING_CLAIMS_TEMPLATE = """\
The claims below were extracted from the response. List any factual claims \
stated in the response that are missing from the list, one per line, each \
formatted as ("subject", "relation", "object"). If nothing is missing, \
reply with the single word none.

Response: {response}

Extracted claims:
{claims}

Missing claims:"""


def cmd_eval_extractor(config: RunConfig, records_path, examples_path, out_path,
                       parallelism: int | None = None) -> int:
    from claimcheck.checker import ClaimsMissingError
    from claimcheck.extractor import parse_triplets

    backend_id = config.require_backend(config.judge_backend, "judge")
    examples = _read_examples_map(examples_path)
    records = load_records(records_path)
    for record in records:
        _example_for(record, examples)
        if record.claims is None:
            raise ClaimsMissingError(
                f"record {record.id!r} has no extracted claims")
    client = build_client(config, parallelism)

    parse_failures = 0
    per_response = []
    all_flags: list[bool] = []
    total_missing = 0
    for record in records:
        flags: list[bool] = []
        for claim in record.claims:
            prompt = (CLAIM_FLAG_TEMPLATE
                      .replace("{response}", record.response_text)
                      .replace("{claim}", claim.as_sentence()))
            reply = client.complete(backend_id, prompt, max_tokens=8,
                                    temperature=0.0)
            verdict = parse_yes_no(reply)
            if verdict is None:
                parse_failures += 1
                verdict = False
            flags.append(verdict)
        prompt = (MISSING_CLAIMS_TEMPLATE
                  .replace("{response}", record.response_text)
                  .replace("{claims}", serialize_claims(record.claims) or "(none)"))
        reply = client.complete(backend_id, prompt, max_tokens=256, temperature=0.0)
        missing = len(parse_triplets(reply).claims)
        scores = extractor_scores(flags, missing)
        all_flags.extend(flags)
        total_missing += missing
        per_response.append({
            "id": record.id,
            "flags": flags,
            "missing_count": missing,
            "precision": scores.precision,
            "recall": scores.recall,
            "f1": scores.f1,
        })
    overall = extractor_scores(all_flags, total_missing)
    doc = {
        "per_response": per_response,
        "overall": {"precision": overall.precision, "recall": overall.recall,
                    "f1": overall.f1, "claims": len(all_flags),
                    "missing": total_missing},
        "parse_failures": parse_failures,
    }
    Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    _write_record_manifest(config, [backend_id],
                           {"records": records_path, "examples": examples_path},
                           out_path)
    print(f"precision: {overall.precision:.4f}")
    print(f"recall: {overall.recall:.4f}")
    print(f"f1: {overall.f1:.4f}")
    print(f"parse_failures: {parse_failures}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# repc
# ---------------------------------------------------------------------------


def cmd_repc_train(config: RunConfig, train_path, dev_path, ensemble_path,
                   out_path) -> int:
    train = load_representations(train_path)
    dev = load_representations(dev_path)
    ensemble = load_representations(ensemble_path) if ensemble_path else None
    hyperparams = dict(config.repc_hyperparams)
    hyperparams.setdefault("seed", config.seed)
    model, diagnostics = train_repc(config.repc_kind, config.repc_mode,
                                    train, dev, ensemble, hyperparams)
    save_model(out_path, model)
    inputs = {"train": train_path, "dev": dev_path}
    if ensemble_path:
        inputs["ensemble"] = ensemble_path
    _write_record_manifest(config, [], inputs, out_path)
    for layer in sorted(diagnostics["dev_macro_f1"]):
        print(f"layer {layer}: dev_macro_f1 {diagnostics['dev_macro_f1'][layer]:.4f} "
              f"dev_accuracy {diagnostics['dev_accuracy'][layer]:.4f}")
    if "selected_layer" in diagnostics:
        print(f"selected_layer: {diagnostics['selected_layer']}")
    if "weights" in diagnostics:
        weights = "  ".join(f"{layer}={weight:.4f}"
                            for layer, weight in sorted(diagnostics["weights"].items()))
        print(f"weights ({diagnostics['weights_split']}): {weights}")
    return EXIT_OK


def cmd_repc_predict(config: RunConfig, model_path, reps_path, out_path) -> int:
    model = load_model(model_path)
    reps = load_representations(reps_path)
    grouped = group_by_pair(reps)
    rows = []
    distribution = {label: 0 for label in LABEL_ORDER}
    for pair_id, layers in grouped.items():
        label = model.predict(layers)
        distribution[label] += 1
        rows.append({"pair_id": pair_id, "label": label.value})
    write_jsonl(out_path, rows)
    _write_record_manifest(config, [], {"model": model_path, "reps": reps_path},
                           out_path)
    for label in LABEL_ORDER:
        print(f"{label.value}: {distribution[label]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# hard-cases
# ---------------------------------------------------------------------------


def cmd_hard_cases(config: RunConfig, examples_path, response_paths, k, out_path,
                   selected_out=None, parallelism: int | None = None) -> int:
    backend_id = config.require_backend(config.judge_backend, "judge")
    examples = _read_examples_map(examples_path)
    records: list[ResponseRecord] = []
    for path in response_paths:
        records.extend(load_records(path))
    seen: set[tuple[str, str]] = set()
    for record in records:
        _example_for(record, examples)
        key = (record.example_id, record.model_name)
        if key in seen:
            raise SchemaViolationError(
                f"duplicate response for example {record.example_id!r} "
                f"by model {record.model_name!r}"
            )
        seen.add(key)
    client = build_client(config, parallelism)
    judge = ResponseJudge(client, backend_id, fallback=config.judge_fallback)
    verdicts_by_example: dict[str, dict[str, bool]] = {}
    for record in records:
        verdict = judge.judge_response_level(examples[record.example_id],
                                             record.response_text)
        verdicts_by_example.setdefault(record.example_id, {})[record.model_name] = verdict
    scores = [HardnessScore.from_verdicts(example_id, verdicts)
              for example_id, verdicts in sorted(verdicts_by_example.items())]
    selected = select_hard_cases(scores, k)
    write_jsonl(out_path, (hardness_to_dict(score) for score in scores))
    if selected_out:
        Path(selected_out).write_text(json.dumps(selected, indent=2) + "\n",
                                      encoding="utf-8")
    inputs = {"examples": examples_path}
    for i, path in enumerate(response_paths):
        inputs[f"responses:{i}"] = path
    _write_record_manifest(config, [backend_id], inputs, out_path)
    for example_id in selected:
        print(example_id)
    print(f"parse_failures: {judge.parse_failures}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# granularity
# ---------------------------------------------------------------------------


def cmd_granularity(records_by_granularity: Mapping[str, object], gold_path,
                    out_path) -> int:
    if not records_by_granularity:
        raise ConfigError("granularity needs at least one records file")
    gold: dict[str, HallucinationLabel] | None = None
    if gold_path is not None:
        gold = {}
        for line_number, obj in read_jsonl(gold_path):
            try:
                record_id = obj["id"]
                label = HallucinationLabel(obj["label"])
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaViolationError(f"bad gold line: {exc}",
                                           line=line_number) from None
            gold[record_id] = label
    doc: dict = {"granularities": {}}
    for name in sorted(records_by_granularity):
        records = load_records(records_by_granularity[name])
        pooled: dict[str, HallucinationLabel] = {}
        abstained = 0
        for record in records:
            verdicts = _record_verdicts(record)
            if not verdicts:
                abstained += 1
                continue
            pooled[record.id] = pool_to_response(verdicts)
        entry: dict = {
            "pooled_counts": {label.value: sum(1 for v in pooled.values() if v is label)
                              for label in LABEL_ORDER},
            "abstained": abstained,
            "responses": len(records),
        }
        if gold is not None:
            gold_labels = []
            pred_labels = []
            for record_id, label in pooled.items():
                if record_id not in gold:
                    raise SchemaViolationError(
                        f"gold file lacks response {record_id!r}")
                gold_labels.append(gold[record_id])
                pred_labels.append(label)
            scores = checker_scores(confusion_counts(gold_labels, pred_labels))
            entry["accuracy"] = scores.accuracy
            entry["macro_f1"] = scores.macro_f1
        doc["granularities"][name] = entry
    Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    for name in sorted(doc["granularities"]):
        entry = doc["granularities"][name]
        counts = entry["pooled_counts"]
        line = (f"{name}: E {counts['entailment']}  N {counts['neutral']}  "
                f"C {counts['contradiction']}  abstained {entry['abstained']}")
        if "accuracy" in entry:
            line += f"  accuracy {entry['accuracy']:.4f}  macro_f1 {entry['macro_f1']:.4f}"
        print(line)
    return EXIT_OK


# ---------------------------------------------------------------------------
# filter-examples
# ---------------------------------------------------------------------------


def cmd_filter_examples(config: RunConfig, examples_path, template_path, out_path,
                        parallelism: int | None = None) -> int:
    backend_id = config.require_backend(config.judge_backend, "judge")
    with open(template_path, "r", encoding="utf-8") as handle:
        template = handle.read()
    if "{question}" not in template:
        raise ConfigError("filter template must contain a {question} placeholder")
    examples: list[BenchmarkExample] = []
    for line_number, obj in read_jsonl(examples_path):
        try:
            examples.append(example_from_dict(obj))
        except SchemaViolationError as exc:
            raise SchemaViolationError(str(exc), line=line_number) from None
    client = build_client(config, parallelism)
    kept: list[BenchmarkExample] = []
    dropped = 0
    parse_failures = 0
    for example in examples:
        prompt = (template
                  .replace("{question}", example.question)
                  .replace("{references}", "\n\n".join(example.references)))
        reply = client.complete(backend_id, prompt, max_tokens=8, temperature=0.0)
        verdict = parse_yes_no(reply)
        if verdict is None:
            parse_failures += 1
            verdict = False
        if verdict:
            dropped += 1
        else:
            kept.append(example)
    write_jsonl(out_path, (example_to_dict(example) for example in kept))
    _write_record_manifest(config, [backend_id],
                           {"examples": examples_path, "template": template_path},
                           out_path)
    print(f"kept: {len(kept)}")
    print(f"dropped: {dropped}")
    print(f"parse_failures: {parse_failures}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _parse_named_paths(pairs: Sequence[str], flag: str) -> dict[str, str]:
    """NAME=PATH arguments into a dict; bare paths are rejected."""
    out: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"{flag} expects NAME=PATH, got {pair!r}")
        name, path = pair.split("=", 1)
        if not name or not path:
            raise ConfigError(f"{flag} expects NAME=PATH, got {pair!r}")
        if name in out:
            raise ConfigError(f"{flag} repeats name {name!r}")
        out[name] = path
    return out


def _infer_model_names(pairs: Sequence[str]) -> dict[str, str]:
    """--records values into model → path; bare paths read the name from the file."""
    out: dict[str, str] = {}
    for pair in pairs:
        if "=" in pair:
            name, path = pair.split("=", 1)
            if not name or not path:
                raise ConfigError(f"--records expects [NAME=]PATH, got {pair!r}")
        else:
            path = pair
            names = {record.model_name for record in load_records(path)}
            if len(names) != 1:
                raise SchemaViolationError(
                    f"records file {path!r} holds {len(names)} model names; "
                    "pass an explicit NAME=PATH"
                )
            name = names.pop()
        if name in out:
            raise ConfigError(f"--records repeats model {name!r}")
        out[name] = path
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimcheck",
        description="Claim-level hallucination checking pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--parallelism", type=int, default=None,
                       help="override config parallelism")

    p = sub.add_parser("extract", help="extract claim triplets from responses")
    add_config(p)
    p.add_argument("--examples", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("check", help="check extracted claims against references")
    add_config(p)
    p.add_argument("--records", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="aggregate checked records into reports")
    p.add_argument("--records", required=True, action="append",
                   metavar="[NAME=]PATH")
    p.add_argument("--examples", default=None,
                   help="examples file enabling the per-setting breakdown")
    p.add_argument("--gold", default=None,
                   help="gold-verdict records for checker evaluation")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval-extractor",
                       help="judge extracted claims and score the extractor")
    add_config(p)
    p.add_argument("--records", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("repc-train", help="train representation classifiers")
    add_config(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--ensemble", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("repc-predict",
                       help="predict labels from representation files")
    add_config(p)
    p.add_argument("--model", required=True)
    p.add_argument("--reps", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("hard-cases", help="judge responses and rank hard examples")
    add_config(p)
    p.add_argument("--examples", required=True)
    p.add_argument("--responses", required=True, nargs="+")
    p.add_argument("--k", required=True, type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--selected-out", default=None)

    p = sub.add_parser("granularity",
                       help="pool granularity verdict files to response level")
    p.add_argument("--records", required=True, action="append", metavar="NAME=PATH")
    p.add_argument("--gold", default=None,
                   help="response-level gold labels JSONL ({id, label})")
    p.add_argument("--out", required=True)

    p = sub.add_parser("filter-examples",
                       help="drop examples a judge answers yes about")
    add_config(p)
    p.add_argument("--examples", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)

    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "extract":
        config = load_config(args.config)
        return cmd_extract(config, args.examples, args.responses, args.out,
                           args.parallelism)
    if args.command == "check":
        config = load_config(args.config)
        return cmd_check(config, args.records, args.examples, args.out,
                         args.parallelism)
    if args.command == "report":
        return cmd_report(_infer_model_names(args.records), args.gold,
                          args.out_dir, args.examples)
    if args.command == "eval-extractor":
        config = load_config(args.config)
        return cmd_eval_extractor(config, args.records, args.examples, args.out,
                                  args.parallelism)
    if args.command == "repc-train":
        config = load_config(args.config)
        return cmd_repc_train(config, args.train, args.dev, args.ensemble, args.out)
    if args.command == "repc-predict":
        config = load_config(args.config)
        return cmd_repc_predict(config, args.model, args.reps, args.out)
    if args.command == "hard-cases":
        config = load_config(args.config)
        return cmd_hard_cases(config, args.examples, args.responses, args.k,
                              args.out, args.selected_out, args.parallelism)
    if args.command == "granularity":
        return cmd_granularity(_parse_named_paths(args.records, "--records"),
                               args.gold, args.out)
    if args.command == "filter-examples":
        config = load_config(args.config)
        return cmd_filter_examples(config, args.examples, args.template, args.out,
                                   args.parallelism)
    raise AssertionError(f"unhandled command {args.command!r}")


def _error_name(exc: BaseException) -> str:
    if isinstance(exc, OSError):
        return "IoError"
    name = type(exc).__name__
    if name.endswith("Error"):
        name = name[: -len("Error")]
    return name


def _error_exit_code(exc: BaseException) -> int:
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, _BACKEND_FAILURES):
        return EXIT_BACKEND
    return EXIT_VALIDATION


def console_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (OSError, ValueError, *_BACKEND_FAILURES) as exc:
        payload = {"error": _error_name(exc), "message": str(exc)}
        line = getattr(exc, "line", None)
        if line is not None:
            payload["line"] = line
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return _error_exit_code(exc)


if __name__ == "__main__":
    sys.exit(console_main())
