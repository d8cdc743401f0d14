"""LLM-based semantic profiling of columns, plus dataset topic generation.

Each column is classified into semantic types (temporal/spatial flags with
resolutions, entity type, data format, domain, usage context) by prompting an
LLM with the column name and sampled values, expecting a strict JSON object.
Three execution modes produce identical results for a well-behaved provider:

- ``seq``: one completion per column, serially;
- ``mt``: one completion per column on a bounded thread pool;
- ``gp``: columns packed into batches, one completion per batch, the response
  being a JSON array with one object per column in order.

Unparseable responses are retried with a repair instruction; a column that
stays unparseable degrades to an all-empty profile with a warning rather than
aborting the dataset. A fully unparseable grouped batch falls back to
per-column prompting for that batch.
"""
from __future__ import annotations

import json
import logging
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ContractViolationError, ProviderUnavailableError, SemanticParseError
from .gateway import CompletionRequest, LlmGateway
from .prompts import TemplateSet
from .tables import TableHandle, sample_column_values

logger = logging.getLogger(__name__)

EXEC_MODES = ("seq", "mt", "gp")

JSON_OBJECT_REPAIR = "Your previous reply was not valid JSON. Reply with only the JSON object."
JSON_ARRAY_REPAIR = "Your previous reply was not valid JSON. Reply with only the JSON array."


@dataclass(frozen=True)
class SemanticColumnProfile:
    """Semantic classification of one column. Empty strings mean "unknown"."""

    column_name: str
    is_temporal: bool = False
    temporal_resolution: str = ""
    is_spatial: bool = False
    spatial_resolution: str = ""
    entity_type: str = ""
    data_format: str = ""
    domain_specific_type: str = ""
    usage_context: str = ""

    def __post_init__(self) -> None:
        # A resolution only makes sense on a raised flag.
        if self.temporal_resolution and not self.is_temporal:
            object.__setattr__(self, "temporal_resolution", "")
        if self.spatial_resolution and not self.is_spatial:
            object.__setattr__(self, "spatial_resolution", "")

    @property
    def is_empty(self) -> bool:
        return not (
            self.is_temporal
            or self.is_spatial
            or self.entity_type
            or self.data_format
            or self.domain_specific_type
            or self.usage_context
        )

    def to_dict(self) -> dict:
        return {
            "column_name": self.column_name,
            "is_temporal": self.is_temporal,
            "temporal_resolution": self.temporal_resolution,
            "is_spatial": self.is_spatial,
            "spatial_resolution": self.spatial_resolution,
            "entity_type": self.entity_type,
            "data_format": self.data_format,
            "domain_specific_type": self.domain_specific_type,
            "usage_context": self.usage_context,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SemanticColumnProfile":
        return cls(**obj)


def serialize_column_profile(profile: SemanticColumnProfile) -> str:
    """Render one column's semantic profile as a single line of prose.

    Empty fields drop their sentence; an all-empty profile renders as just the
    bolded column-name header.
    """
    parts = [f"**{profile.column_name}**:"]
    if profile.entity_type:
        parts.append(f"Represents {profile.entity_type.lower()}.")
    if profile.is_temporal:
        parts.append(f"Contains temporal data (resolution: {profile.temporal_resolution}).")
    if profile.is_spatial:
        parts.append(f"Contains spatial data (resolution: {profile.spatial_resolution}).")
    if profile.domain_specific_type:
        parts.append(f"Domain-specific type: {profile.domain_specific_type.lower()}.")
    if profile.usage_context:
        parts.append(f"Function/Usage Context: {profile.usage_context}.")
    return " ".join(parts)


@dataclass(frozen=True)
class SemanticSummary:
    """Per-column prose summaries in column order, and their concatenation."""

    column_summaries: tuple[str, ...]
    combined: str

    @classmethod
    def from_columns(cls, profiles: Sequence[SemanticColumnProfile]) -> "SemanticSummary":
        summaries = tuple(serialize_column_profile(p) for p in profiles)
        return cls(column_summaries=summaries, combined="\n".join(summaries))


@dataclass
class DatasetSemanticProfile:
    """Result of profiling a whole table: raw profiles plus rendered summary."""

    columns: list[SemanticColumnProfile]
    summary: SemanticSummary
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "columns": [c.to_dict() for c in self.columns],
            "column_summaries": list(self.summary.column_summaries),
            "combined": self.summary.combined,
            "warnings": list(self.warnings),
        }


# --------------------------------------------------------------------------
# Response parsing


def _normalize_key(key: str) -> str:
    return "".join(ch for ch in key.lower() if ch.isalnum())


def _coerce_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        return value.strip().lower() in ("true", "yes")
    return bool(value)


def _coerce_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value).strip()


def _strip_code_fence(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        lines = stripped.splitlines()
        if lines and lines[0].startswith("```"):
            lines = lines[1:]
        if lines and lines[-1].strip() == "```":
            lines = lines[:-1]
        stripped = "\n".join(lines).strip()
    return stripped


def parse_semantic_object(obj: dict, column_name: str) -> SemanticColumnProfile:
    """Map a decoded response object onto a profile, tolerating key variants."""
    by_key = {_normalize_key(k): v for k, v in obj.items()}

    def section(name: str) -> dict:
        value = by_key.get(name)
        return value if isinstance(value, dict) else {}

    temporal = {_normalize_key(k): v for k, v in section("temporal").items()}
    spatial = {_normalize_key(k): v for k, v in section("spatial").items()}
    is_temporal = _coerce_bool(temporal.get("istemporal", by_key.get("istemporal", False)))
    is_spatial = _coerce_bool(spatial.get("isspatial", by_key.get("isspatial", False)))
    return SemanticColumnProfile(
        column_name=column_name,
        is_temporal=is_temporal,
        temporal_resolution=_coerce_text(
            temporal.get("resolution", by_key.get("temporalresolution", ""))
        ),
        is_spatial=is_spatial,
        spatial_resolution=_coerce_text(
            spatial.get("resolution", by_key.get("spatialresolution", ""))
        ),
        entity_type=_coerce_text(by_key.get("entitytype", "")),
        data_format=_coerce_text(by_key.get("dataformat", "")),
        domain_specific_type=_coerce_text(
            by_key.get("domainspecifictypes", by_key.get("domainspecifictype", ""))
        ),
        usage_context=_coerce_text(
            by_key.get("functionusagecontext", by_key.get("usagecontext", ""))
        ),
    )


def parse_semantic_response(text: str, column_name: str) -> SemanticColumnProfile:
    """Decode a single-column response; raises SemanticParseError when invalid."""
    try:
        obj = json.loads(_strip_code_fence(text))
    except json.JSONDecodeError as exc:
        raise SemanticParseError(f"semantic response is not JSON: {exc}", text) from exc
    if not isinstance(obj, dict):
        raise SemanticParseError("semantic response is not a JSON object", text)
    return parse_semantic_object(obj, column_name)


# --------------------------------------------------------------------------
# Prompt construction


def build_system_text(templates: TemplateSet, grouped: bool = False) -> str:
    name = "semantic_grouped_system.txt" if grouped else "semantic_system.txt"
    return templates.fill(
        name,
        TEMPLATE=templates.load("semantic_template.json"),
        RESPONSE_EXAMPLE=templates.load("semantic_response_example.json"),
    )


def build_column_payload(
    templates: TemplateSet,
    table: TableHandle,
    column_index: int,
    sample_size: int,
    seed: int,
) -> str:
    values = sample_column_values(table, column_index, sample_size, seed)
    return templates.fill(
        "semantic_column.txt",
        column_name=table.column_names[column_index],
        sample_values=json.dumps(values),
    )


# --------------------------------------------------------------------------
# Profiling


@dataclass(frozen=True)
class SemanticSettings:
    """Knobs for semantic profiling; defaults match the run-config defaults."""

    mode: str = "seq"
    workers: int = 64
    batch_size: int = 8
    sample_size: int = 5
    seed: int = 0
    json_retries: int = 3
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.mode not in EXEC_MODES:
            raise ContractViolationError(
                f"execution mode must be one of {EXEC_MODES}, got {self.mode!r}"
            )
        if self.workers < 1 or self.batch_size < 1:
            raise ContractViolationError("workers and batch_size must be >= 1")


def _complete_json(
    gateway: LlmGateway,
    payload: str,
    system_text: str,
    settings: SemanticSettings,
    repair: str,
    parse,
):
    """Run a completion, retrying with a repair instruction while unparseable."""
    prompt = payload
    last_error: SemanticParseError | None = None
    for _ in range(settings.json_retries + 1):
        result = gateway.complete(
            CompletionRequest(
                tag="semantic-profile",
                user_prompt=prompt,
                system_instructions=system_text,
                temperature=settings.temperature,
                max_output_tokens=settings.max_output_tokens,
            )
        )
        try:
            return parse(result.text)
        except SemanticParseError as exc:
            last_error = exc
            prompt = payload + "\n" + repair
    raise last_error


def profile_column_strict(
    table: TableHandle,
    column_index: int,
    gateway: LlmGateway,
    templates: TemplateSet,
    settings: SemanticSettings,
) -> SemanticColumnProfile:
    """Profile one column; raises SemanticParseError after exhausted JSON retries."""
    name = table.column_names[column_index]
    payload = build_column_payload(
        templates, table, column_index, settings.sample_size, settings.seed
    )
    return _complete_json(
        gateway,
        payload,
        build_system_text(templates, grouped=False),
        settings,
        JSON_OBJECT_REPAIR,
        lambda text: parse_semantic_response(text, name),
    )


def profile_column(
    table: TableHandle,
    column_index: int,
    gateway: LlmGateway,
    templates: TemplateSet,
    settings: SemanticSettings | None = None,
    warnings: list[str] | None = None,
) -> SemanticColumnProfile:
    """Profile one column, degrading to an all-empty profile on parse failure."""
    settings = settings or SemanticSettings()
    name = table.column_names[column_index]
    try:
        return profile_column_strict(table, column_index, gateway, templates, settings)
    except SemanticParseError:
        message = f"column {name!r}: semantic response unparseable; using empty profile"
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
        return SemanticColumnProfile(column_name=name)


def _profile_batch(
    table: TableHandle,
    indices: list[int],
    gateway: LlmGateway,
    templates: TemplateSet,
    settings: SemanticSettings,
    warnings: list[str],
) -> list[SemanticColumnProfile]:
    """Grouped mode: one completion for a batch of columns."""
    payload = "".join(
        build_column_payload(templates, table, i, settings.sample_size, settings.seed)
        for i in indices
    )
    names = [table.column_names[i] for i in indices]

    def parse(text: str) -> list:
        try:
            arr = json.loads(_strip_code_fence(text))
        except json.JSONDecodeError as exc:
            raise SemanticParseError(f"grouped response is not JSON: {exc}", text) from exc
        if not isinstance(arr, list) or len(arr) != len(indices):
            raise SemanticParseError(
                f"grouped response must be a JSON array of {len(indices)} objects", text
            )
        return arr

    try:
        elements = _complete_json(
            gateway,
            payload,
            build_system_text(templates, grouped=True),
            settings,
            JSON_ARRAY_REPAIR,
            parse,
        )
    except SemanticParseError:
        message = (
            f"grouped batch {names}: response unparseable; falling back to per-column prompting"
        )
        logger.warning(message)
        warnings.append(message)
        return [
            profile_column(table, i, gateway, templates, settings, warnings) for i in indices
        ]

    profiles = []
    for name, element in zip(names, elements):
        if isinstance(element, dict):
            profiles.append(parse_semantic_object(element, name))
        else:
            message = f"column {name!r}: grouped element is not an object; using empty profile"
            logger.warning(message)
            warnings.append(message)
            profiles.append(SemanticColumnProfile(column_name=name))
    return profiles


def profile_dataset(
    table: TableHandle,
    gateway: LlmGateway,
    templates: TemplateSet,
    settings: SemanticSettings | None = None,
) -> DatasetSemanticProfile:
    """Profile every column of a table under the configured execution mode.

    Column order is preserved in all modes; per-column parse failures degrade
    to empty profiles with warnings. Provider-unavailable errors propagate —
    they indicate the run cannot proceed, not a malformed response.
    """
    settings = settings or SemanticSettings()
    warnings: list[str] = []
    indices = list(range(table.column_count))

    if settings.mode == "seq":
        profiles = [
            profile_column(table, i, gateway, templates, settings, warnings) for i in indices
        ]
    elif settings.mode == "mt":
        # map() preserves submission order regardless of completion order.
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            profiles = list(
                pool.map(
                    lambda i: profile_column(table, i, gateway, templates, settings, warnings),
                    indices,
                )
            )
    else:  # gp
        profiles = []
        for start in range(0, len(indices), settings.batch_size):
            batch = indices[start : start + settings.batch_size]
            profiles.extend(
                _profile_batch(table, batch, gateway, templates, settings, warnings)
            )

    return DatasetSemanticProfile(
        columns=profiles,
        summary=SemanticSummary.from_columns(profiles),
        warnings=warnings,
    )


# --------------------------------------------------------------------------
# Topic generation


@dataclass(frozen=True)
class DatasetTopic:
    """A 1-3 word dataset topic; ``fallback_used`` marks title-derived topics."""

    text: str
    fallback_used: bool = False


def normalize_topic(raw: str) -> str:
    """Strip punctuation and quotes, keep at most the first three words."""
    words = []
    for token in raw.replace("\n", " ").split(" "):
        token = token.strip().strip(string.punctuation + "“”‘’`")
        if token:
            words.append(token)
        if len(words) == 3:
            break
    return " ".join(words)


def fallback_topic(title: str) -> DatasetTopic:
    text = normalize_topic(title) or "dataset"
    return DatasetTopic(text=text, fallback_used=True)


def generate_topic(
    title: str,
    original_description: str | None,
    dataset_sample: str,
    gateway: LlmGateway,
    templates: TemplateSet,
    temperature: float = 0.0,
    max_output_tokens: int = 64,
) -> DatasetTopic:
    """Generate a 2-3 word topic; fall back to the title on provider failure."""
    description_line = (
        templates.fill("topic_description_line.txt", original_description=original_description)
        if original_description
        else ""
    )
    prompt = templates.fill(
        "topic.txt",
        title=title,
        original_description_line=description_line,
        dataset_sample=dataset_sample,
    )
    try:
        result = gateway.complete(
            CompletionRequest(
                tag="topic",
                user_prompt=prompt,
                temperature=temperature,
                max_output_tokens=max_output_tokens,
            )
        )
    except ProviderUnavailableError:
        logger.warning("topic generation failed for %r; falling back to title", title)
        return fallback_topic(title)
    text = normalize_topic(result.text)
    if not text:
        return fallback_topic(title)
    return DatasetTopic(text=text, fallback_used=False)
