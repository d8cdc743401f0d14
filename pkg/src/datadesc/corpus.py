"""Corpus-level description runs.

Fans the per-dataset pipeline out over a manifest (optionally across worker
threads), then aggregates everything deterministically in manifest order into
a content-addressed run directory::

    <output_dir>/run-<config hash>/
        config.json            the canonical configuration that produced the run
        descriptions.jsonl     one DescriptionRecord per line, manifest order
        errors.jsonl           one line per failed dataset (empty when clean)
        events.jsonl           numbered structured log (warnings + stage usage)
        cost.csv               per-stage totals across the corpus
        cost_by_dataset.csv    per-dataset, per-stage totals
        artifacts/<id>.json    per-dataset intermediate products

A failed dataset never stops the run: its error is recorded and the remaining
datasets proceed. All run-level files are written atomically by the
aggregating thread, so re-runs with the same config and mock script are
byte-identical. Event lines carry sequence numbers, not wall-clock times, for
the same reason.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import RunConfig, build_provider
from .descriptions import DescriptionRecord, run_pipeline
from .errors import ConfigurationError, DatadescError
from .gateway import CostLedger, LlmGateway
from .ioutil import atomic_write_json, atomic_write_text
from .prompts import TemplateSet
from .tables import ManifestEntry, load_manifest, load_table

COST_HEADER = "tag,calls,input_tokens,output_tokens,latency_ms"


@dataclass
class DatasetRunResult:
    """Everything one dataset produced: records, events, usage, or an error."""

    dataset_id: str
    records: list[DescriptionRecord] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    usage: dict[str, dict[str, int]] = field(default_factory=dict)
    error: str | None = None


@dataclass
class CorpusRunResult:
    """Aggregated outcome of a corpus run."""

    run_dir: Path
    records: list[DescriptionRecord] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    usage_by_dataset: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)

    @property
    def cost_by_tag(self) -> dict[str, dict[str, int]]:
        totals: dict[str, dict[str, int]] = {}
        for usage in self.usage_by_dataset.values():
            for tag, slot in usage.items():
                merged = totals.setdefault(
                    tag,
                    {"calls": 0, "input_tokens": 0, "output_tokens": 0, "latency_ms": 0},
                )
                for key in merged:
                    merged[key] += slot[key]
        return totals

    def exit_status(self) -> int:
        """0 all datasets succeeded, 2 partial failure, 1 nothing produced."""
        if not self.records:
            return 1
        return 2 if self.errors else 0


def _process_dataset(
    entry: ManifestEntry,
    provider,
    config: RunConfig,
    templates: TemplateSet,
    artifacts_dir: Path,
) -> DatasetRunResult:
    ledger = CostLedger()
    gateway = LlmGateway(
        provider, ledger=ledger, max_retries=config.provider.max_retries
    )
    result = DatasetRunResult(dataset_id=entry.dataset_id)
    try:
        table = load_table(entry)
        result.records = run_pipeline(
            table,
            gateway,
            templates,
            config.pipeline_settings(),
            artifacts_dir=artifacts_dir,
            event_sink=result.events,
        )
    except DatadescError as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    result.usage = ledger.totals_by_tag()
    return result


def _cost_csv(cost_by_tag: dict[str, dict[str, int]]) -> str:
    lines = [COST_HEADER]
    for tag in sorted(cost_by_tag):
        slot = cost_by_tag[tag]
        lines.append(
            f"{tag},{slot['calls']},{slot['input_tokens']},"
            f"{slot['output_tokens']},{slot['latency_ms']}"
        )
    return "\n".join(lines) + "\n"


def _cost_by_dataset_csv(
    order: list[str], usage_by_dataset: dict[str, dict[str, dict[str, int]]]
) -> str:
    lines = ["dataset_id," + COST_HEADER]
    for dataset_id in order:
        usage = usage_by_dataset.get(dataset_id, {})
        for tag in sorted(usage):
            slot = usage[tag]
            lines.append(
                f"{dataset_id},{tag},{slot['calls']},{slot['input_tokens']},"
                f"{slot['output_tokens']},{slot['latency_ms']}"
            )
    return "\n".join(lines) + "\n"


def run_corpus(
    config: RunConfig,
    templates: TemplateSet | None = None,
    provider=None,
    jobs: int = 1,
) -> CorpusRunResult:
    """Describe every dataset in the configured manifest.

    ``jobs`` bounds dataset-level parallelism; outputs are aggregated in
    manifest order regardless, so any job count yields the same files for a
    stateless mock script.
    """
    if config.manifest_path is None:
        raise ConfigurationError("config has no [paths] manifest entry")
    if jobs < 1:
        raise ConfigurationError("jobs must be >= 1")
    entries = load_manifest(config.manifest_path)
    templates = templates if templates is not None else TemplateSet()
    if provider is None:
        provider = build_provider(config.provider)

    run_dir = config.run_dir()
    artifacts_dir = run_dir / "artifacts"
    artifacts_dir.mkdir(parents=True, exist_ok=True)

    def process(entry: ManifestEntry) -> DatasetRunResult:
        return _process_dataset(entry, provider, config, templates, artifacts_dir)

    if jobs > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(process, entries))
    else:
        results = [process(entry) for entry in entries]

    outcome = CorpusRunResult(run_dir=run_dir)
    for result in results:
        outcome.records.extend(result.records)
        outcome.usage_by_dataset[result.dataset_id] = result.usage
        for event in result.events:
            outcome.events.append(dict(event))
        for tag in sorted(result.usage):
            slot = result.usage[tag]
            outcome.events.append(
                {
                    "dataset_id": result.dataset_id,
                    "stage": tag,
                    "level": "usage",
                    "message": (
                        f"calls={slot['calls']} input_tokens={slot['input_tokens']} "
                        f"output_tokens={slot['output_tokens']} "
                        f"latency_ms={slot['latency_ms']}"
                    ),
                    **slot,
                }
            )
        if result.error is not None:
            outcome.errors.append(
                {"dataset_id": result.dataset_id, "error": result.error}
            )
            outcome.events.append(
                {
                    "dataset_id": result.dataset_id,
                    "stage": "pipeline",
                    "level": "error",
                    "message": result.error,
                }
            )
    for seq, event in enumerate(outcome.events):
        event["seq"] = seq

    atomic_write_json(run_dir / "config.json", config.to_canonical_dict())
    atomic_write_text(
        run_dir / "descriptions.jsonl",
        "".join(record.to_json_line() + "\n" for record in outcome.records),
    )
    atomic_write_text(
        run_dir / "errors.jsonl",
        "".join(json.dumps(error, sort_keys=True) + "\n" for error in outcome.errors),
    )
    atomic_write_text(
        run_dir / "events.jsonl",
        "".join(json.dumps(event, sort_keys=True) + "\n" for event in outcome.events),
    )
    atomic_write_text(run_dir / "cost.csv", _cost_csv(outcome.cost_by_tag))
    atomic_write_text(
        run_dir / "cost_by_dataset.csv",
        _cost_by_dataset_csv([entry.dataset_id for entry in entries],
                             outcome.usage_by_dataset),
    )
    return outcome


def load_descriptions(path: str | Path) -> list[dict]:
    """Read a descriptions.jsonl file back into record dicts."""
    path = Path(path)
    records: list[dict] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(
                    f"{path}:{lineno}: invalid descriptions line: {exc}"
                ) from exc
            if "dataset_id" not in record or "text" not in record:
                raise ConfigurationError(
                    f"{path}:{lineno}: descriptions line needs dataset_id and text"
                )
            records.append(record)
    return records


def description_texts(records: list, mode: str | None = None) -> dict[str, str]:
    """dataset_id -> text map, keeping the last record per dataset.

    Accepts loaded JSONL dicts or DescriptionRecord objects. ``mode`` filters
    to one record kind ("UFD" | "SFD") when given.
    """
    texts: dict[str, str] = {}
    for record in records:
        if not isinstance(record, dict):
            record = record.to_dict()
        if mode is not None and record.get("mode") != mode:
            continue
        texts[record["dataset_id"]] = record["text"]
    return texts
