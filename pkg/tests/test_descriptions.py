"""Tests for UFD/SFD generation, ablation wiring, and the per-table pipeline."""
import json

import pytest

from conftest import make_table
from datadesc.errors import GenerationError
from datadesc.gateway import CostLedger, LlmGateway, MockProvider
from datadesc.descriptions import (
    GenerationContext,
    PipelineSettings,
    build_sfd_prompt,
    build_ufd_prompt,
    generate_sfd,
    generate_ufd,
    run_pipeline,
    validate_sfd_structure,
)
from datadesc.prompts import TemplateSet
from datadesc.semantic_profile import DatasetTopic, SemanticSettings
from test_semantic_profile import column_response, six_column_script, six_column_table

VALID_SFD = (
    "Dataset Overview:\nThe initial description stays here.\n\n"
    "Key Themes or Topics:\n- finance\n\n"
    "Applications and Use Cases:\n- regulation\n\n"
    "Concepts and Synonyms:\n- insurer/underwriter\n\n"
    "Keywords and Themes:\n- insurance\n\n"
    "Additional Context:\n- annual filings\n"
)


def make_gateway(script, **kwargs):
    provider = MockProvider(script)
    gateway = LlmGateway(provider, ledger=CostLedger(), sleep=lambda s: None, **kwargs)
    return provider, gateway


def pipeline_script(ufd_text="A user-focused description.", sfd_text=VALID_SFD):
    script = six_column_script()
    script["rules"] += [
        {"tag": "topic", "response": "insurance finance data"},
        {"tag": "ufd", "response": ufd_text},
        {"tag": "sfd", "response": sfd_text},
    ]
    return script


class TestUfdPrompt:
    def test_full_context_assembly(self):
        templates = TemplateSet()
        context = GenerationContext(
            d_sample="S", d_profile="P", d_semantic="M", d_topic="T"
        )
        prompt = build_ufd_prompt(templates, context)
        expected = (
            "Answer the question using the following information. First, consider "
            "the dataset sample: S. Additionally, the dataset profile is as follows: "
            "P. Based on this profile, please add sentence(s) to enrich the dataset "
            "description. Furthermore, the semantic profile of the dataset columns "
            "is as follows: M. Based on this information, please add sentence(s) "
            "discussing the semantic profile in the description. Moreover, the "
            "dataset topic is: T. Based on this topic, please add sentence(s) "
            "describing what this dataset can be used for."
            "\n\n"
            "Based on the information above and the requirements, provide a dataset "
            "description in sentences. Use only natural, readable sentences without "
            "special formatting."
        )
        assert prompt == expected

    def test_nosp_context_omits_semantic_and_topic_sentences(self):
        prompt = build_ufd_prompt(
            TemplateSet(), GenerationContext(d_sample="S", d_profile="P")
        )
        assert "S" in prompt and "P" in prompt
        assert "semantic profile" not in prompt
        assert "dataset topic" not in prompt
        assert prompt.startswith("Answer the question")
        assert prompt.endswith("without special formatting.")

    def test_empty_topic_omits_only_topic_block(self):
        prompt = build_ufd_prompt(
            TemplateSet(),
            GenerationContext(d_sample="S", d_profile="P", d_semantic="M", d_topic=None),
        )
        assert "semantic profile of the dataset columns is as follows: M." in prompt
        assert "dataset topic" not in prompt


class TestGenerateUfd:
    def test_record_fields_and_cost(self):
        provider, gateway = make_gateway(
            {"rules": [{"tag": "ufd", "response": "  A description.  "}]}
        )
        record = generate_ufd(
            GenerationContext(d_sample="S", d_profile="P"),
            gateway,
            TemplateSet(),
            "ds1",
            PipelineSettings(),
        )
        assert record.mode == "UFD"
        assert record.dataset_id == "ds1"
        assert record.text == "A description."  # stripped only
        assert record.config == {
            "sp_enabled": True,
            "sfd_enabled": True,
            "exec_mode": "seq",
            "model": "mock",
        }
        assert set(record.cost) == {"ufd"}
        assert record.cost["ufd"]["calls"] == 1
        assert record.tokens_in == record.cost["ufd"]["input_tokens"] > 0

    def test_json_line_schema(self):
        _, gateway = make_gateway({"rules": [{"tag": "ufd", "response": "text"}]})
        record = generate_ufd(
            GenerationContext(d_sample="S", d_profile="P"),
            gateway,
            TemplateSet(),
            "ds1",
            PipelineSettings(),
        )
        line = json.loads(record.to_json_line())
        assert set(line) == {
            "dataset_id", "mode", "config", "text", "tokens_in", "tokens_out",
        }


class TestSfdValidation:
    def test_full_structure_valid(self):
        assert validate_sfd_structure(VALID_SFD)

    def test_related_topics_variant_accepted(self):
        text = (
            "Dataset Overview: x\nRelated Topics: y\n"
            "Applications and Use Cases: z\nKeywords and Themes: w\n"
        )
        assert validate_sfd_structure(text)

    def test_missing_overview_rejected(self):
        text = (
            "Key Themes or Topics: y\nApplications and Use Cases: z\n"
            "Concepts and Synonyms: v\nKeywords and Themes: w\n"
        )
        assert not validate_sfd_structure(text)

    def test_two_optional_sections_insufficient(self):
        text = "Dataset Overview: x\nKey Themes or Topics: y\nKeywords and Themes: w\n"
        assert not validate_sfd_structure(text)

    def test_three_optional_sections_sufficient(self):
        text = (
            "Dataset Overview: x\nKey Themes or Topics: y\n"
            "Concepts and Synonyms: v\nKeywords and Themes: w\n"
        )
        assert validate_sfd_structure(text)


class TestGenerateSfd:
    def test_prompt_embeds_topic_description_and_template(self):
        templates = TemplateSet()
        topic = DatasetTopic("health insurance finance")
        prompt = build_sfd_prompt(templates, topic, "The UFD text.")
        assert "health insurance finance" in prompt
        assert "The UFD text." in prompt
        assert templates.load("sfd_structure.txt") in prompt

    def test_valid_first_response_single_call(self):
        provider, gateway = make_gateway({"rules": [{"tag": "sfd", "response": VALID_SFD}]})
        warnings: list[str] = []
        record = generate_sfd(
            DatasetTopic("t"), "UFD text", gateway, TemplateSet(), "ds1",
            PipelineSettings(), warnings,
        )
        assert record.mode == "SFD"
        assert record.initial_description == "UFD text"
        assert record.cost["sfd"]["calls"] == 1
        assert len(provider.calls) == 1
        assert warnings == []

    def test_invalid_then_valid_reprompts_once(self):
        provider, gateway = make_gateway(
            {"rules": [{"tag": "sfd", "responses": ["no sections here", VALID_SFD]}]}
        )
        warnings: list[str] = []
        record = generate_sfd(
            DatasetTopic("t"), "UFD text", gateway, TemplateSet(), "ds1",
            PipelineSettings(), warnings,
        )
        assert len(provider.calls) == 2
        reminder = TemplateSet().load("sfd_retry_reminder.txt")
        assert provider.calls[1][1].endswith("\n\n" + reminder)
        assert record.text == VALID_SFD.strip()
        assert record.cost["sfd"]["calls"] == 2
        assert warnings == []

    def test_persistently_invalid_accepted_with_warning(self):
        provider, gateway = make_gateway(
            {"rules": [{"tag": "sfd", "response": "still no sections"}]}
        )
        warnings: list[str] = []
        record = generate_sfd(
            DatasetTopic("t"), "UFD text", gateway, TemplateSet(), "ds1",
            PipelineSettings(), warnings,
        )
        assert len(provider.calls) == 2  # exactly one re-prompt
        assert record.text == "still no sections"
        assert len(warnings) == 1 and "accepting as-is" in warnings[0]


class TestRunPipeline:
    def test_full_flags_record_and_call_counts(self):
        provider, gateway = make_gateway(pipeline_script())
        settings = PipelineSettings(semantic=SemanticSettings(mode="mt"))
        records = run_pipeline(six_column_table(), gateway, TemplateSet(), settings)
        assert [r.mode for r in records] == ["UFD", "SFD"]
        tags = [tag for tag, _ in provider.calls]
        assert tags.count("semantic-profile") == 6
        assert tags.count("topic") == 1
        assert tags.count("ufd") == 1
        assert tags.count("sfd") == 1
        # Zero-cost stage entry for the algorithmic profile.
        totals = gateway.ledger.totals_by_tag()
        assert totals["content-profile-none"] == {
            "calls": 1, "input_tokens": 0, "output_tokens": 0, "latency_ms": 0,
        }

    def test_grouped_mode_single_semantic_call(self):
        provider, gateway = make_gateway(pipeline_script())
        settings = PipelineSettings(semantic=SemanticSettings(mode="gp"))
        run_pipeline(six_column_table(), gateway, TemplateSet(), settings)
        tags = [tag for tag, _ in provider.calls]
        assert tags.count("semantic-profile") == 1

    def test_nosp_nosfd_one_record_no_llm_context_stages(self):
        provider, gateway = make_gateway(pipeline_script())
        settings = PipelineSettings(sp_enabled=False, sfd_enabled=False)
        records = run_pipeline(six_column_table(), gateway, TemplateSet(), settings)
        assert [r.mode for r in records] == ["UFD"]
        tags = [tag for tag, _ in provider.calls]
        assert tags == ["ufd"]
        ufd_prompt = provider.calls[0][1]
        assert "Number of Rows: 3" in ufd_prompt  # profile present
        assert "col1,col2" in ufd_prompt  # sample header present
        assert "semantic profile" not in ufd_prompt
        assert "dataset topic" not in ufd_prompt

    def test_nosfd_ufd_prompt_embeds_semantic_summary(self):
        provider, gateway = make_gateway(pipeline_script())
        settings = PipelineSettings(sfd_enabled=False)
        records = run_pipeline(six_column_table(), gateway, TemplateSet(), settings)
        assert [r.mode for r in records] == ["UFD"]
        ufd_prompt = [p for tag, p in provider.calls if tag == "ufd"][0]
        assert "**col1**:" in ufd_prompt
        assert "Represents entity 1." in ufd_prompt
        assert "insurance finance data" in ufd_prompt  # topic from LLM

    def test_nosp_sfd_uses_title_topic_without_llm_call(self):
        import dataclasses

        provider, gateway = make_gateway(pipeline_script())
        settings = PipelineSettings(sp_enabled=False)
        table = dataclasses.replace(
            six_column_table(), title="Quarterly Insurance Filings Report"
        )
        records = run_pipeline(table, gateway, TemplateSet(), settings)
        assert [r.mode for r in records] == ["UFD", "SFD"]
        tags = [tag for tag, _ in provider.calls]
        assert tags == ["ufd", "sfd"]  # no semantic, no topic completions
        # Title-derived topic: first three words of the title.
        sfd_prompt = provider.calls[1][1]
        assert "about the topic Quarterly Insurance Filings," in sfd_prompt
        assert "Report" not in sfd_prompt.split("initial description")[0]

    def test_sfd_chaining_prompt_contains_ufd_verbatim(self):
        provider, gateway = make_gateway(
            pipeline_script(ufd_text="This dataset tracks insurer finances.")
        )
        records = run_pipeline(six_column_table(), gateway, TemplateSet(), PipelineSettings())
        ufd, sfd = records
        sfd_prompt = [p for tag, p in provider.calls if tag == "sfd"][0]
        assert ufd.text in sfd_prompt
        assert sfd.initial_description == ufd.text

    def test_ufd_failure_raises_generation_error(self):
        script = pipeline_script()
        script["rules"] = [r for r in script["rules"] if r.get("tag") != "ufd"]
        _, gateway = make_gateway(script, max_retries=1)
        events: list = []
        with pytest.raises(GenerationError):
            run_pipeline(
                six_column_table(), gateway, TemplateSet(), PipelineSettings(),
                event_sink=events,
            )
        assert any(e["stage"] == "ufd" and e["level"] == "error" for e in events)

    def test_sfd_failure_keeps_ufd(self):
        script = pipeline_script()
        script["rules"] = [r for r in script["rules"] if r.get("tag") != "sfd"]
        _, gateway = make_gateway(script, max_retries=1)
        events: list = []
        records = run_pipeline(
            six_column_table(), gateway, TemplateSet(), PipelineSettings(),
            event_sink=events,
        )
        assert [r.mode for r in records] == ["UFD"]
        assert any(e["stage"] == "sfd" and e["level"] == "error" for e in events)

    def test_semantic_warnings_become_events(self):
        script = pipeline_script()
        script["rules"].insert(
            0, {"tag": "semantic-profile", "contains": "col3", "response": "garbage"}
        )
        _, gateway = make_gateway(script)
        events: list = []
        records = run_pipeline(
            six_column_table(), gateway, TemplateSet(), PipelineSettings(),
            event_sink=events,
        )
        assert len(records) == 2
        assert any(
            e["stage"] == "semantic-profile" and "col3" in e["message"] for e in events
        )

    def test_determinism_across_runs(self):
        lines = []
        for _ in range(2):
            _, gateway = make_gateway(pipeline_script())
            records = run_pipeline(
                six_column_table(), gateway, TemplateSet(), PipelineSettings()
            )
            lines.append([r.to_json_line() for r in records])
        assert lines[0] == lines[1]

    def test_texts_equal_across_exec_modes(self):
        texts = {}
        for mode in ("seq", "mt", "gp"):
            _, gateway = make_gateway(pipeline_script())
            records = run_pipeline(
                six_column_table(),
                gateway,
                TemplateSet(),
                PipelineSettings(semantic=SemanticSettings(mode=mode)),
            )
            texts[mode] = [(r.mode, r.text, r.tokens_in, r.tokens_out) for r in records]
        assert texts["seq"] == texts["mt"] == texts["gp"]

    def test_artifacts_document(self, tmp_path):
        _, gateway = make_gateway(pipeline_script())
        table = six_column_table()
        records = run_pipeline(
            table, gateway, TemplateSet(), PipelineSettings(), artifacts_dir=tmp_path
        )
        document = json.loads((tmp_path / f"{table.dataset_id}.json").read_text())
        assert document["dataset_id"] == table.dataset_id
        assert document["ufd"] == records[0].text
        assert document["sfd"] == records[1].text
        assert document["topic"]["text"] == "insurance finance data"
        assert "Number of Rows: 3" in document["content_summary"]
        assert len(document["semantic"]["columns"]) == 6
        assert document["config"]["sp_enabled"] is True
