"""Description generation: User-Focused and Search-Focused Descriptions.

The pipeline for one table is:

1. algorithmic content profile (no LLM; logged as a zero-cost stage),
2. optionally semantic profiling plus topic generation (skipped by the
   ``sp_enabled=False`` ablation),
3. a User-Focused Description (UFD) prompted from the sample, the content
   summary, and — when present — the semantic summary and topic,
4. optionally a Search-Focused Description (SFD) that expands the UFD for
   search-engine indexing (skipped by the ``sfd_enabled=False`` ablation).

The UFD prompt is assembled from sentence segments so that ablations omit
whole sentences rather than leaving dangling placeholders. SFD output must
contain a minimum set of section headings; one re-prompt with a structure
reminder is attempted before accepting a non-conforming response.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .content_profile import profile_table, render_content_summary
from .errors import GenerationError, ProviderUnavailableError
from .gateway import CompletionRequest, CompletionResult, LlmGateway
from .ioutil import atomic_write_json
from .prompts import TemplateSet
from .semantic_profile import (
    DatasetTopic,
    SemanticSettings,
    fallback_topic,
    generate_topic,
    profile_dataset,
)
from .tables import TableHandle, render_sample_block, sample_rows

logger = logging.getLogger(__name__)

UFD_MODE = "UFD"
SFD_MODE = "SFD"

SFD_REQUIRED_SECTION = "Dataset Overview"
# Fig-style expansions name "Related Topics" where the structure template says
# "Key Themes or Topics"; either satisfies that slot.
SFD_OPTIONAL_SECTIONS = (
    ("Key Themes or Topics", "Related Topics"),
    ("Applications and Use Cases",),
    ("Concepts and Synonyms",),
    ("Keywords and Themes",),
    ("Additional Context",),
)
SFD_MIN_OPTIONAL_SECTIONS = 3


@dataclass(frozen=True)
class GenerationContext:
    """Inputs of the UFD prompt; optional parts are None under ablations."""

    d_sample: str
    d_profile: str
    d_semantic: str | None = None
    d_topic: str | None = None


@dataclass
class DescriptionRecord:
    """One generated description plus the cost of its own generation stage."""

    dataset_id: str
    mode: str  # UFD_MODE or SFD_MODE
    config: dict
    text: str
    cost: dict = field(default_factory=dict)  # {tag: {calls, input_tokens, ...}}
    initial_description: str | None = None  # SFD only: the UFD it extends

    @property
    def tokens_in(self) -> int:
        return sum(slice_["input_tokens"] for slice_ in self.cost.values())

    @property
    def tokens_out(self) -> int:
        return sum(slice_["output_tokens"] for slice_ in self.cost.values())

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "mode": self.mode,
            "config": self.config,
            "text": self.text,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


@dataclass(frozen=True)
class PipelineSettings:
    """Configuration of one description run (ablations, sampling, provider)."""

    sp_enabled: bool = True
    sfd_enabled: bool = True
    semantic: SemanticSettings = field(default_factory=SemanticSettings)
    row_sample_size: int = 5
    seed: int = 0
    temperature: float = 0.0
    max_output_tokens: int = 2048
    model_name: str = "mock"

    def config_dict(self) -> dict:
        return {
            "sp_enabled": self.sp_enabled,
            "sfd_enabled": self.sfd_enabled,
            "exec_mode": self.semantic.mode,
            "model": self.model_name,
        }


def _cost_slice(result: CompletionResult) -> dict:
    return {
        "calls": 1,
        "input_tokens": result.input_tokens,
        "output_tokens": result.output_tokens,
        "latency_ms": result.latency_ms,
    }


def _merge_cost(base: dict, extra: dict) -> dict:
    merged = dict(base)
    for key, value in extra.items():
        merged[key] = merged.get(key, 0) + value
    return merged


# --------------------------------------------------------------------------
# UFD


def build_ufd_prompt(templates: TemplateSet, context: GenerationContext) -> str:
    """Assemble the UFD prompt; optional segments drop out whole."""
    segments = [
        templates.fill(
            "ufd_intro.txt", D_sample=context.d_sample, D_profile=context.d_profile
        )
    ]
    if context.d_semantic is not None:
        segments.append(templates.fill("ufd_semantic.txt", D_semantic=context.d_semantic))
    if context.d_topic is not None:
        segments.append(templates.fill("ufd_topic.txt", D_topic=context.d_topic))
    return " ".join(segments) + "\n\n" + templates.load("ufd_outro.txt")


def generate_ufd(
    context: GenerationContext,
    gateway: LlmGateway,
    templates: TemplateSet,
    dataset_id: str,
    settings: PipelineSettings,
) -> DescriptionRecord:
    """Produce the User-Focused Description for an assembled context."""
    prompt = build_ufd_prompt(templates, context)
    result = gateway.complete(
        CompletionRequest(
            tag="ufd",
            user_prompt=prompt,
            temperature=settings.temperature,
            max_output_tokens=settings.max_output_tokens,
        )
    )
    return DescriptionRecord(
        dataset_id=dataset_id,
        mode=UFD_MODE,
        config=settings.config_dict(),
        text=result.text.strip(),
        cost={"ufd": _cost_slice(result)},
    )


# --------------------------------------------------------------------------
# SFD


def validate_sfd_structure(text: str) -> bool:
    """True when the required overview section and enough optional ones appear."""
    if SFD_REQUIRED_SECTION not in text:
        return False
    hits = sum(
        1 for variants in SFD_OPTIONAL_SECTIONS if any(v in text for v in variants)
    )
    return hits >= SFD_MIN_OPTIONAL_SECTIONS


def build_sfd_prompt(
    templates: TemplateSet, topic: DatasetTopic, initial_description: str
) -> str:
    return templates.fill(
        "sfd.txt",
        D_topic=topic.text,
        D_initial_description=initial_description,
        Template=templates.load("sfd_structure.txt"),
    )


def generate_sfd(
    topic: DatasetTopic,
    initial_description: str,
    gateway: LlmGateway,
    templates: TemplateSet,
    dataset_id: str,
    settings: PipelineSettings,
    warnings: list[str] | None = None,
) -> DescriptionRecord:
    """Produce the Search-Focused Description extending ``initial_description``.

    A response missing the required section structure triggers exactly one
    re-prompt carrying a structure reminder; a second non-conforming response
    is accepted as-is with a warning.
    """
    prompt = build_sfd_prompt(templates, topic, initial_description)
    result = gateway.complete(
        CompletionRequest(
            tag="sfd",
            user_prompt=prompt,
            temperature=settings.temperature,
            max_output_tokens=settings.max_output_tokens,
        )
    )
    cost = _cost_slice(result)
    text = result.text.strip()
    if not validate_sfd_structure(text):
        retry_prompt = prompt + "\n\n" + templates.load("sfd_retry_reminder.txt")
        retry = gateway.complete(
            CompletionRequest(
                tag="sfd",
                user_prompt=retry_prompt,
                temperature=settings.temperature,
                max_output_tokens=settings.max_output_tokens,
            )
        )
        cost = {"sfd": _merge_cost(cost, _cost_slice(retry))}
        text = retry.text.strip()
        if not validate_sfd_structure(text):
            message = (
                f"dataset {dataset_id!r}: SFD still missing required sections "
                "after re-prompt; accepting as-is"
            )
            logger.warning(message)
            if warnings is not None:
                warnings.append(message)
    else:
        cost = {"sfd": cost}
    return DescriptionRecord(
        dataset_id=dataset_id,
        mode=SFD_MODE,
        config=settings.config_dict(),
        text=text,
        cost=cost,
        initial_description=initial_description,
    )


# --------------------------------------------------------------------------
# Pipeline


def run_pipeline(
    table: TableHandle,
    gateway: LlmGateway,
    templates: TemplateSet,
    settings: PipelineSettings | None = None,
    artifacts_dir: str | Path | None = None,
    event_sink: list | None = None,
) -> list[DescriptionRecord]:
    """Run the two-stage pipeline for one table.

    Returns the UFD record, plus the SFD record when enabled. A UFD failure
    raises GenerationError (the dataset yields no records); an SFD provider
    failure keeps the UFD record and logs an event. Non-fatal stage warnings
    are appended to ``event_sink`` as dicts.
    """
    settings = settings or PipelineSettings()
    events = event_sink if event_sink is not None else []

    def emit(stage: str, level: str, message: str) -> None:
        events.append(
            {
                "dataset_id": table.dataset_id,
                "stage": stage,
                "level": level,
                "message": message,
            }
        )

    # Stage 1a: algorithmic content profile — explicit zero-cost ledger entry
    # so cost reports show every stage.
    profile = profile_table(table)
    d_profile = render_content_summary(profile)
    gateway.ledger.record("content-profile-none", 0, 0, 0)

    sample_text = render_sample_block(
        sample_rows(table, settings.row_sample_size, settings.seed)
    )

    # Stage 1b: semantic profile + topic (skipped under the noSP ablation; the
    # SFD then uses a title-derived topic without any LLM call).
    semantic = None
    if settings.sp_enabled:
        semantic = profile_dataset(table, gateway, templates, settings.semantic)
        for warning in semantic.warnings:
            emit("semantic-profile", "warning", warning)
        topic = generate_topic(
            table.title, table.description, sample_text, gateway, templates,
            temperature=settings.temperature,
        )
    else:
        topic = fallback_topic(table.title)

    context = GenerationContext(
        d_sample=sample_text,
        d_profile=d_profile,
        d_semantic=semantic.summary.combined if semantic is not None else None,
        d_topic=topic.text if settings.sp_enabled else None,
    )

    # Stage 2a: UFD — a failure here aborts the dataset.
    try:
        ufd = generate_ufd(context, gateway, templates, table.dataset_id, settings)
    except ProviderUnavailableError as exc:
        emit("ufd", "error", str(exc))
        raise GenerationError(
            f"UFD generation failed for dataset {table.dataset_id!r}: {exc}"
        ) from exc
    records = [ufd]

    # Stage 2b: SFD — a failure here keeps the UFD.
    sfd = None
    if settings.sfd_enabled:
        sfd_warnings: list[str] = []
        try:
            sfd = generate_sfd(
                topic, ufd.text, gateway, templates, table.dataset_id, settings,
                warnings=sfd_warnings,
            )
            records.append(sfd)
        except ProviderUnavailableError as exc:
            emit("sfd", "error", f"SFD generation failed, keeping UFD only: {exc}")
        for warning in sfd_warnings:
            emit("sfd", "warning", warning)

    if artifacts_dir is not None:
        document = {
            "dataset_id": table.dataset_id,
            "config": settings.config_dict(),
            "content_profile": json.loads(profile.to_json()),
            "content_summary": d_profile,
            "sample": sample_text,
            "semantic": semantic.to_dict() if semantic is not None else None,
            "topic": {"text": topic.text, "fallback_used": topic.fallback_used},
            "ufd": ufd.text,
            "sfd": sfd.text if sfd is not None else None,
        }
        atomic_write_json(Path(artifacts_dir) / f"{table.dataset_id}.json", document)

    return records
