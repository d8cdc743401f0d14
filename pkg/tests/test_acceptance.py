"""Acceptance gate: one test per criterion, `pytest -v` gives one line each.

Offline criteria (1-10) run against bundled fixtures and the scripted mock
provider. Data-conditional criteria (11-12) need externally assembled inputs
and skip with an explanatory reason when the environment variables that point
at them are unset:

    DATADESC_ECIR_BENCH   benchmark bundle dir (queries.tsv/qrels.tsv/manifest.jsonl)
    DATADESC_NTCIR_BENCH  second benchmark bundle dir
    DATADESC_SFD_RUN      descriptions.jsonl produced with a live LLM

Tolerances are stated per test: NDCG oracle agreement 1e-12, BM25 oracle
agreement 1e-9, metric identities 1e-12; everything else is exact (integer,
string, or byte equality).
"""
from __future__ import annotations

import json
import os
import random
import time
from pathlib import Path

import pytest

from datadesc.config import apply_overrides, load_config
from datadesc.corpus import description_texts, load_descriptions, run_corpus
from datadesc.descriptions import PipelineSettings, run_pipeline
from datadesc.gateway import CostLedger, LlmGateway, MockProvider
from datadesc.prompts import TemplateSet, as_regex
from datadesc.quality import meteor, rouge
from datadesc.retrieval import (
    RankedList,
    bench_stats,
    build_index,
    evaluate,
    load_benchmark,
    ndcg_at_k,
    score,
)
from datadesc.semantic_profile import (
    SemanticSettings,
    build_column_payload,
    build_system_text,
    parse_semantic_response,
    profile_dataset,
    serialize_column_profile,
)
from datadesc.tables import ManifestEntry, load_table

from conftest import make_table
from oracles import oracle_bm25_ranking, oracle_bm25_scores, oracle_ndcg

FIXTURES = Path(__file__).parent / "fixtures"

ALL_A = "Completeness: A, Conciseness: A, Readability: A"
ALL_B = "Completeness: B, Conciseness: B, Readability: B"


def health_insurance_table():
    return load_table(
        ManifestEntry(
            dataset_id="health-insurance",
            title="Health Insurance Annual Filings",
            csv_path=FIXTURES / "health_insurance.csv",
        )
    )


def gateway_over(script: dict) -> tuple[MockProvider, LlmGateway]:
    provider = MockProvider(script)
    return provider, LlmGateway(provider, ledger=CostLedger(), sleep=lambda s: None)


# ---------------------------------------------------------------------------
# Criterion 1 — NDCG oracle equivalence
# ---------------------------------------------------------------------------


def test_c01_ndcg_matches_bruteforce_oracle_500_instances():
    """500 random instances (<=10 docs, grades 0-3) agree within 1e-12; perfect
    rankings score exactly 1.0; wall time under 5 s."""
    rng = random.Random(20260815)
    started = time.monotonic()
    for _ in range(500):
        n_docs = rng.randint(1, 10)
        doc_ids = [f"d{i}" for i in range(n_docs)]
        # judge a random subset (possibly none, possibly all zero grades)
        grades = {
            doc_id: rng.randint(0, 3) for doc_id in doc_ids if rng.random() < 0.8
        }
        ranking_ids = doc_ids[:]
        rng.shuffle(ranking_ids)
        ranked = RankedList(
            query_id="q",
            ranking=tuple(
                (doc_id, float(n_docs - i)) for i, doc_id in enumerate(ranking_ids)
            ),
        )
        qrels = {("q", doc_id): grade for doc_id, grade in grades.items()}
        k = rng.randint(1, 10)
        linear = rng.random() < 0.5
        expected = oracle_ndcg(ranking_ids, grades, k, linear=linear)
        actual = ndcg_at_k(ranked, qrels, k, linear=linear)
        assert abs(actual - expected) <= 1e-12

        # perfect ranking: judged docs first, sorted by grade descending
        if any(grade > 0 for grade in grades.values()):
            by_grade = sorted(
                doc_ids, key=lambda d: (-grades.get(d, 0), d)
            )
            perfect = RankedList(
                query_id="q",
                ranking=tuple(
                    (doc_id, float(n_docs - i)) for i, doc_id in enumerate(by_grade)
                ),
            )
            assert ndcg_at_k(perfect, qrels, k) == 1.0
    assert time.monotonic() - started < 5.0


# ---------------------------------------------------------------------------
# Criterion 2 — BM25 oracle equivalence
# ---------------------------------------------------------------------------


def test_c02_bm25_matches_direct_formula_oracle_200_corpora():
    """200 random corpora (<=20 docs, vocab <=30): per-document scores within
    1e-9 and the full ranking equals the oracle argsort (score desc, id asc);
    wall time under 10 s."""
    rng = random.Random(11)
    vocabulary = [f"w{i}" for i in range(30)]
    started = time.monotonic()
    for _ in range(200):
        n_docs = rng.randint(1, 20)
        docs = {
            f"doc{i:02d}": " ".join(
                rng.choice(vocabulary) for _ in range(rng.randint(1, 12))
            )
            for i in range(n_docs)
        }
        k1 = rng.uniform(0.5, 2.0)
        b = rng.uniform(0.0, 1.0)
        epsilon = rng.uniform(0.05, 1.0)
        query = " ".join(rng.choice(vocabulary) for _ in range(rng.randint(1, 4)))

        index = build_index(docs, k1=k1, b=b, epsilon=epsilon)
        ranked = score(query, index, query_id="q")
        expected_scores = oracle_bm25_scores(docs, query, k1=k1, b=b, epsilon=epsilon)
        for doc_id, doc_score in ranked.ranking:
            assert abs(doc_score - expected_scores[doc_id]) <= 1e-9
        expected_ranking = [doc_id for doc_id, _ in
                            oracle_bm25_ranking(docs, query, k1=k1, b=b, epsilon=epsilon)]
        assert [doc_id for doc_id, _ in ranked.ranking] == expected_ranking
    assert time.monotonic() - started < 10.0


# ---------------------------------------------------------------------------
# Criterion 3 — content-profiler golden fixture
# ---------------------------------------------------------------------------


def test_c03_content_profiler_golden_fixture_byte_for_byte():
    """790x6 fixture: Year typed {Text, DateTime} covering 2013->2022 with 10
    uniques, Liabilities typed {Integer} covering 0->2682301090.0 with 757
    uniques; the rendered summary equals the golden file byte-for-byte."""
    from datadesc.content_profile import profile_table, render_content_summary

    profile = profile_table(health_insurance_table())
    assert profile.row_count == 790
    assert profile.column_count == 6

    by_name = {column.name: column for column in profile.columns}
    year = by_name["Year"]
    assert set(year.inferred_types) == {"Text", "DateTime"}
    assert (year.temporal_min_text, year.temporal_max_text) == ("2013", "2022")
    assert year.unique_count == 10

    liabilities = by_name["Liabilities"]
    assert set(liabilities.inferred_types) == {"Integer"}
    assert liabilities.numeric_min_text == "0"
    assert liabilities.numeric_max_text == "2682301090.0"
    assert liabilities.unique_count == 757

    golden = (FIXTURES / "health_insurance_summary.txt").read_bytes()
    assert render_content_summary(profile).encode("utf-8") == golden


# ---------------------------------------------------------------------------
# Criterion 4 — semantic serialization golden
# ---------------------------------------------------------------------------


def test_c04_semantic_serialization_golden_sentence():
    """The worked year-column profile serializes exactly to the documented
    sentence (exact string equality)."""
    response = json.dumps(
        {
            "Temporal": {"isTemporal": True, "resolution": "Year"},
            "Spatial": {"isSpatial": False, "resolution": ""},
            "Entity Type": "Temporal Entity",
            "Domain-Specific Types": "General",
            "Function/Usage Context": "Aggregation Key",
        }
    )
    profile = parse_semantic_response(response, "Year")
    assert serialize_column_profile(profile) == (
        "**Year**: Represents temporal entity. "
        "Contains temporal data (resolution: Year). "
        "Domain-specific type: general. "
        "Function/Usage Context: Aggregation Key."
    )


# ---------------------------------------------------------------------------
# Criterion 5 — execution-mode equivalence on the 6-column fixture
# ---------------------------------------------------------------------------

SEMANTIC_OBJECT = json.dumps(
    {
        "Temporal": {"isTemporal": False, "resolution": ""},
        "Spatial": {"isSpatial": False, "resolution": ""},
        "Entity Type": "Record Attribute",
        "Data Format": "Numeric",
        "Domain-Specific Types": "Financial",
        "Function/Usage Context": "Measurement",
    }
)


def test_c05_mode_equivalence_sequential_concurrent_grouped():
    """seq, mt(64 workers), and gp(batch 8) over the 6-column fixture with the
    same mock produce byte-identical summaries; the call log shows exactly
    6, 6, and 1 semantic completions."""
    table = health_insurance_table()
    script = {
        "rules": [
            # a second column payload in the prompt marks a grouped batch
            {
                "tag": "semantic-profile",
                "contains": "\n- Column name: ",
                "response": "[" + ",".join([SEMANTIC_OBJECT] * 6) + "]",
            },
            {"tag": "semantic-profile", "response": SEMANTIC_OBJECT},
        ]
    }
    templates = TemplateSet()
    summaries: dict[str, str] = {}
    calls: dict[str, int] = {}
    for mode in ("seq", "mt", "gp"):
        provider, gateway = gateway_over(script)
        settings = SemanticSettings(mode=mode, workers=64, batch_size=8)
        result = profile_dataset(table, gateway, templates, settings)
        assert result.warnings == []
        summaries[mode] = result.summary.combined
        calls[mode] = sum(1 for tag, _ in provider.calls if tag == "semantic-profile")
    assert summaries["seq"] == summaries["mt"] == summaries["gp"]
    assert (calls["seq"], calls["mt"], calls["gp"]) == (6, 6, 1)


# ---------------------------------------------------------------------------
# Criterion 6 — group-prompting token arithmetic
# ---------------------------------------------------------------------------


def test_c06_grouped_token_totals_exactly_500_vs_1500(tmp_path):
    """With 200-token shared instructions and 50-token column payloads over a
    6-column table, semantic input tokens are exactly 500 grouped vs 1500
    per-column (integer equality); grouped < per-column holds for every
    bundled fixture with >=2 columns."""
    # -- exact arithmetic on purpose-built templates ------------------------
    # tokenizer is ceil(chars/4): 800-char system = 200 tokens, 200-char
    # payload = 50 tokens. Placeholders must stay in the overridden templates,
    # so pad around the known substitution values.
    (tmp_path / "semantic_template.json").write_text("T")
    (tmp_path / "semantic_response_example.json").write_text("E")
    system_text = "{TEMPLATE}{RESPONSE_EXAMPLE}" + "x" * 798  # fills to 800 chars
    (tmp_path / "semantic_system.txt").write_text(system_text)
    (tmp_path / "semantic_grouped_system.txt").write_text(system_text)
    # column names "c1".."c6" (2 chars) and sample JSON '["v"]' (5 chars)
    (tmp_path / "semantic_column.txt").write_text(
        "{column_name}{sample_values}" + "y" * 193  # fills to 200 chars
    )
    templates = TemplateSet(root=tmp_path)
    table = make_table({f"c{i}": ["v"] for i in range(1, 7)})

    assert len(build_system_text(templates)) == 800
    assert len(build_system_text(templates, grouped=True)) == 800
    payload = build_column_payload(templates, table, 0, sample_size=5, seed=0)
    assert len(payload) == 200

    script = {
        "rules": [
            # the junction of two concatenated payloads marks a grouped batch
            {
                "tag": "semantic-profile",
                "contains": "y" * 193 + "c2",
                "response": "[" + ",".join(["{}"] * 6) + "]",
            },
            {"tag": "semantic-profile", "response": "{}"},
        ]
    }
    totals = {}
    for mode, batch in (("seq", 8), ("gp", 8)):
        provider, gateway = gateway_over(script)
        settings = SemanticSettings(mode=mode, batch_size=batch)
        profile_dataset(table, gateway, templates, settings)
        totals[mode] = gateway.ledger.totals_by_tag()["semantic-profile"]["input_tokens"]
    assert totals["seq"] == 1500  # 6 x (200 + 50)
    assert totals["gp"] == 500  # 200 + 6 x 50

    # -- general property on the bundled fixtures ---------------------------
    packaged = TemplateSet()
    corpus_dir = FIXTURES / "mock_corpus"
    fixture_tables = [health_insurance_table()] + [
        load_table(
            ManifestEntry(dataset_id=name, title=name, csv_path=corpus_dir / name)
        )
        for name in ("wind.csv", "insurance.csv", "traffic.csv")
    ]
    grouped_array = {
        "tag": "semantic-profile",
        "contains": "\n- Column name: ",
        # oversized array is never valid; per-table arrays built below
    }
    for table in fixture_tables:
        assert table.column_count >= 2
        array = "[" + ",".join([SEMANTIC_OBJECT] * table.column_count) + "]"
        script = {
            "rules": [
                dict(grouped_array, response=array),
                {"tag": "semantic-profile", "response": SEMANTIC_OBJECT},
            ]
        }
        tokens = {}
        for mode in ("seq", "gp"):
            provider, gateway = gateway_over(script)
            profile_dataset(
                table, gateway, packaged, SemanticSettings(mode=mode, batch_size=8)
            )
            tokens[mode] = gateway.ledger.totals_by_tag()["semantic-profile"][
                "input_tokens"
            ]
        assert tokens["gp"] < tokens["seq"], table.dataset_id


# ---------------------------------------------------------------------------
# Criterion 7 — pipeline determinism
# ---------------------------------------------------------------------------


def test_c07_pipeline_determinism_byte_identical(mock_corpus, tmp_path):
    """Two full mock corpus runs (3 datasets, fixed seed) produce byte-identical
    descriptions JSON-lines and cost CSVs."""
    outputs = []
    for name in ("one", "two"):
        config = apply_overrides(
            load_config(mock_corpus / "config.toml"), output_dir=tmp_path / name
        )
        result = run_corpus(config)
        assert result.errors == []
        outputs.append(
            {
                part: (result.run_dir / part).read_bytes()
                for part in ("descriptions.jsonl", "cost.csv", "cost_by_dataset.csv")
            }
        )
    assert outputs[0] == outputs[1]


# ---------------------------------------------------------------------------
# Criterion 8 — ablation prompt wiring
# ---------------------------------------------------------------------------

SEMANTIC_MARKER = "Furthermore, the semantic profile of the dataset columns is as follows:"
TOPIC_MARKER = "Moreover, the dataset topic is:"
INTRO_MARKER = "Answer the question using the following information."


def test_c08_ablation_prompt_sections_match_configuration(mock_corpus):
    """noSP-noSFD / noSFD / noSP / full: each configuration's prompts carry
    exactly the placeholder sections its flags enable (template-diff)."""
    from datadesc.tables import load_manifest

    entry = load_manifest(mock_corpus / "manifest.jsonl")[0]  # wind-stations
    table = load_table(entry)
    templates = TemplateSet()
    sfd_pattern = as_regex(templates.load("sfd.txt"))

    configurations = {
        "noSP-noSFD": dict(sp_enabled=False, sfd_enabled=False),
        "noSFD": dict(sp_enabled=True, sfd_enabled=False),
        "noSP": dict(sp_enabled=False, sfd_enabled=True),
        "full": dict(sp_enabled=True, sfd_enabled=True),
    }
    for label, flags in configurations.items():
        provider = MockProvider.from_file(mock_corpus / "mock_script.yaml")
        gateway = LlmGateway(provider, ledger=CostLedger(), sleep=lambda s: None)
        records = run_pipeline(
            table, gateway, templates, PipelineSettings(**flags)
        )
        tags = [tag for tag, _ in provider.calls]
        ufd_prompt = next(prompt for tag, prompt in provider.calls if tag == "ufd")

        assert INTRO_MARKER in ufd_prompt, label
        if flags["sp_enabled"]:
            assert SEMANTIC_MARKER in ufd_prompt, label
            assert TOPIC_MARKER in ufd_prompt, label
            assert "semantic-profile" in tags and "topic" in tags, label
        else:
            assert SEMANTIC_MARKER not in ufd_prompt, label
            assert TOPIC_MARKER not in ufd_prompt, label
            assert "semantic-profile" not in tags and "topic" not in tags, label

        if flags["sfd_enabled"]:
            assert [r.mode for r in records] == ["UFD", "SFD"], label
            sfd_prompt = next(
                prompt for tag, prompt in provider.calls if tag == "sfd"
            )
            match = sfd_pattern.fullmatch(sfd_prompt)
            assert match is not None, label
            # the SFD prompt embeds the UFD verbatim as the initial description
            assert match.group("D_initial_description") == records[0].text, label
        else:
            assert [r.mode for r in records] == ["UFD"], label
            assert "sfd" not in tags, label


# ---------------------------------------------------------------------------
# Criterion 9 — metric maxima and zeros
# ---------------------------------------------------------------------------


def test_c09_metric_maxima_and_zeros():
    """Identical texts: ROUGE F1 exactly 1.0, METEOR > 0.9. Disjoint vocabulary:
    all metrics exactly 0. ROUGE-1 F1 on ("a b c", "a b") equals 0.8 within
    1e-12."""
    identical = "surface wind measurements from coastal stations"
    assert rouge(identical, identical) == (1.0, 1.0, 1.0)
    assert meteor(identical, identical) > 0.9

    assert rouge("alpha beta gamma", "delta epsilon zeta") == (0.0, 0.0, 0.0)
    assert meteor("alpha beta gamma", "delta epsilon zeta") == 0.0

    r1, _, _ = rouge("a b c", "a b")
    assert abs(r1 - 0.8) <= 1e-12


# ---------------------------------------------------------------------------
# Criterion 10 — pairwise accounting
# ---------------------------------------------------------------------------


def test_c10_pairwise_win_rates_sum_to_one_and_bias_cancels():
    """Two methods under a deterministic judge: win rates sum to 1.0 per
    dimension (exact). A judge that always prefers position A yields 0.5/0.5
    after the order swap (exact)."""
    from datadesc.quality import DIMENSIONS, judge_pairwise

    templates = TemplateSet()
    corpus = {
        "m1": {"d1": "alpha structured text", "d2": "alpha again"},
        "m2": {"d1": "plain beta text", "d2": "more beta"},
    }

    decisive = {
        "rules": [
            {"tag": "judge-pairwise", "contains": "Description A: alpha", "response": ALL_A},
            {"tag": "judge-pairwise", "contains": "Description B: alpha", "response": ALL_B},
        ]
    }
    _, gateway = gateway_over(decisive)
    report = judge_pairwise(corpus, gateway, templates, pairs_per_dataset=5, seed=9)
    for dimension in DIMENSIONS:
        total = report.win_rate("m1", dimension) + report.win_rate("m2", dimension)
        assert total == 1.0
        assert report.win_rate("m1", dimension) == 1.0

    biased = {"rules": [{"tag": "judge-pairwise", "response": ALL_A}]}
    _, gateway = gateway_over(biased)
    report = judge_pairwise(corpus, gateway, templates, pairs_per_dataset=5, seed=9)
    for dimension in DIMENSIONS:
        assert report.win_rate("m1", dimension) == 0.5
        assert report.win_rate("m2", dimension) == 0.5


# ---------------------------------------------------------------------------
# Criterion 11 — benchmark statistics (data-conditional)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "env_var,queries,tables",
    [
        ("DATADESC_ECIR_BENCH", 120, 1015),
        ("DATADESC_NTCIR_BENCH", 32, 615),
    ],
)
def test_c11_bench_stats_on_assembled_benchmarks(env_var, queries, tables):
    """Given an externally assembled benchmark bundle, bench-stats reports the
    documented query and table counts exactly."""
    directory = os.environ.get(env_var)
    if not directory:
        pytest.skip(
            f"{env_var} is not set; place an assembled benchmark bundle "
            "(queries.tsv, qrels.tsv, manifest.jsonl) and point the variable at it"
        )
    stats = bench_stats(load_benchmark(directory))
    assert stats["queries"] == queries
    assert stats["tables"] == tables


# ---------------------------------------------------------------------------
# Criterion 12 — retrieval direction (data + LLM conditional)
# ---------------------------------------------------------------------------


def test_c12_sfd_beats_original_by_five_ndcg_points_at_20():
    """With a live-LLM description run and an assembled benchmark, the
    search-focused descriptions exceed the original descriptions by at least
    0.05 mean NDCG@20."""
    bench_dir = os.environ.get("DATADESC_ECIR_BENCH")
    run_path = os.environ.get("DATADESC_SFD_RUN")
    if not bench_dir or not run_path:
        pytest.skip(
            "DATADESC_ECIR_BENCH and DATADESC_SFD_RUN are not both set; "
            "point them at an assembled benchmark bundle and a live-LLM "
            "descriptions.jsonl to run the direction check"
        )
    bundle = load_benchmark(bench_dir)
    records = load_descriptions(Path(run_path))
    sfd = evaluate(
        bundle, description_texts(records, mode="SFD"), ks=(20,), method="sfd"
    )
    original = evaluate(bundle, bundle.original_descriptions(), ks=(20,), method="original")
    gap = sfd.mean_ndcg[20] - original.mean_ndcg[20]
    assert gap >= 0.05, f"SFD-original NDCG@20 gap {gap:.4f} below 0.05"
