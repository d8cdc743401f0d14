"""Command-line interface.

Every subcommand takes ``--config`` pointing at a TOML/JSON run configuration
and exits 0 on full success, 1 on fatal configuration/validation errors, and
2 on partial failure (some datasets errored but output was produced).

    profile         content-profile every manifest dataset to text + JSON
    describe        run the full description pipeline over the corpus
    index           build a BM25 index over generated descriptions
    search          query a saved BM25 index
    eval-retrieval  NDCG@k of description methods against a benchmark
    eval-quality    reference metrics + LLM-judge scores for methods
    bench-stats     queries/tables/relevance stats of a benchmark bundle
    cost-report     per-stage and per-dataset cost summary of a run
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .config import apply_overrides, build_gateway, build_provider, load_config
from .content_profile import profile_table, render_content_summary
from .corpus import description_texts, load_descriptions, run_corpus
from .errors import (
    BenchmarkValidationError,
    ConfigurationError,
    DatadescError,
)
from .ioutil import atomic_write_json, atomic_write_text
from .prompts import TemplateSet
from .quality import (
    QualityReport,
    cross_evaluate,
    pointwise_scores_csv,
    pointwise_table,
    reference_scores_csv,
    score_references,
    win_rates_csv,
)
from .retrieval import (
    Bm25Index,
    bench_stats,
    build_index,
    evaluate,
    load_benchmark,
    score,
)
from .tables import load_manifest, load_table

RESULTS_HEADER = "method,k,mean_ndcg"


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigurationError(f"--ks must be integers, got {text!r}") from exc
    if not ks:
        raise ConfigurationError("--ks must name at least one cutoff")
    return ks


def _parse_input(text: str) -> tuple[str, Path]:
    label, sep, path = text.partition("=")
    if not sep or not label or not path:
        raise ConfigurationError(
            f"--input must look like LABEL=PATH, got {text!r}"
        )
    return label, Path(path)


def _method_texts(path: Path, mode: str) -> dict[str, str]:
    records = load_descriptions(path)
    return description_texts(records, mode=None if mode == "last" else mode)


def _collect_methods(
    args, originals: dict[str, str] | None
) -> list[tuple[str, dict[str, str]]]:
    """Assemble (label, dataset_id->text) methods from eval flags."""
    methods: list[tuple[str, dict[str, str]]] = []
    for raw in args.inputs or []:
        label, path = _parse_input(raw)
        methods.append((label, _method_texts(path, args.mode)))
    if args.descriptions is not None:
        methods.append(
            (args.method_label, _method_texts(Path(args.descriptions), args.mode))
        )
    if args.include_original:
        if originals is None:
            raise ConfigurationError(
                "--include-original needs a manifest with original descriptions"
            )
        methods.append(("original", originals))
    labels = [label for label, _ in methods]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"duplicate method labels: {labels}")
    if not methods:
        raise ConfigurationError(
            "no methods given; use --input LABEL=PATH, --descriptions, "
            "or --include-original"
        )
    return methods


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_profile(args) -> int:
    config = load_config(args.config)
    if config.manifest_path is None:
        raise ConfigurationError("config has no [paths] manifest entry")
    entries = load_manifest(config.manifest_path)
    if args.dataset is not None:
        entries = [e for e in entries if e.dataset_id == args.dataset]
        if not entries:
            raise ConfigurationError(f"dataset {args.dataset!r} not in manifest")
    out_dir = Path(config.output_dir) / "profiles"
    out_dir.mkdir(parents=True, exist_ok=True)
    produced = 0
    failed = 0
    for entry in entries:
        try:
            table = load_table(entry)
            profile = profile_table(table)
        except DatadescError as exc:
            _err(f"{entry.dataset_id}: {type(exc).__name__}: {exc}")
            failed += 1
            continue
        atomic_write_text(
            out_dir / f"{entry.dataset_id}.txt", render_content_summary(profile)
        )
        atomic_write_text(
            out_dir / f"{entry.dataset_id}.json", profile.to_json() + "\n"
        )
        print(
            f"{entry.dataset_id}: {profile.row_count} rows, "
            f"{profile.column_count} columns -> {out_dir / (entry.dataset_id + '.txt')}"
        )
        produced += 1
    if not produced:
        return 1
    return 2 if failed else 0


def cmd_describe(args) -> int:
    config = load_config(args.config)
    config = apply_overrides(
        config,
        exec_mode=args.exec_mode,
        workers=args.workers,
        batch_size=args.batch_size,
        sample_size=args.sample_size,
        seed=args.seed,
        sp_enabled=False if args.no_sp else None,
        sfd_enabled=False if args.no_sfd else None,
    )
    result = run_corpus(config, jobs=args.jobs)
    for error in result.errors:
        _err(f"{error['dataset_id']}: {error['error']}")
    print(
        f"{len(result.records)} records for "
        f"{len(result.usage_by_dataset)} datasets -> {result.run_dir}"
    )
    return result.exit_status()


def _prepend_titles(texts: dict[str, str], titles: dict[str, str]) -> dict[str, str]:
    """Indexing variant: prefix each document with its dataset title."""
    return {
        doc_id: f"{titles[doc_id]} {text}".strip() if doc_id in titles else text
        for doc_id, text in texts.items()
    }


def cmd_index(args) -> int:
    config = load_config(args.config)
    texts = _method_texts(Path(args.descriptions), args.mode)
    if args.prepend_title:
        if config.manifest_path is None:
            raise ConfigurationError(
                "--prepend-title needs a [paths] manifest entry for titles"
            )
        titles = {
            entry.dataset_id: entry.title
            for entry in load_manifest(config.manifest_path)
        }
        texts = _prepend_titles(texts, titles)
    index = build_index(texts, k1=config.k1, b=config.b, epsilon=config.epsilon)
    out = Path(args.out)
    atomic_write_json(out, index.to_dict())
    print(f"indexed {len(texts)} documents -> {out}")
    return 0


def cmd_search(args) -> int:
    index_path = Path(args.index)
    if not index_path.is_file():
        raise ConfigurationError(f"index file not found: {index_path}")
    index = Bm25Index.from_dict(json.loads(index_path.read_text(encoding="utf-8")))
    ranked = score(args.query, index, cutoff=args.cutoff, query_id="cli")
    for rank, (doc_id, doc_score) in enumerate(ranked.ranking, start=1):
        print(f"{rank}\t{doc_id}\t{doc_score:.6f}")
    return 0


def _upsert_results_csv(path: Path, new_rows: list[tuple[str, int, float]]) -> None:
    """Merge method rows into the results CSV, replacing re-evaluated methods.

    Keeping one row per (method, k) and sorting makes the command idempotent:
    re-running with identical inputs rewrites an identical file.
    """
    existing: list[tuple[str, int, float]] = []
    if path.is_file():
        lines = path.read_text(encoding="utf-8").splitlines()
        if lines and lines[0] != RESULTS_HEADER:
            raise ConfigurationError(
                f"{path} exists but is not a results CSV (header {lines[0]!r})"
            )
        for line in lines[1:]:
            if not line.strip():
                continue
            method, k_text, mean_text = line.split(",", 2)
            existing.append((method, int(k_text), float(mean_text)))
    replaced = {method for method, _, _ in new_rows}
    merged = [row for row in existing if row[0] not in replaced] + new_rows
    merged.sort(key=lambda row: (row[0], row[1]))
    lines = [RESULTS_HEADER]
    for method, k, mean in merged:
        lines.append(f"{method},{k},{mean:.6f}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_eval_retrieval(args) -> int:
    config = load_config(args.config)
    if config.benchmark_dir is None:
        raise ConfigurationError("config has no [paths] benchmark_dir entry")
    bundle = load_benchmark(config.benchmark_dir)
    methods = _collect_methods(args, originals=bundle.original_descriptions())
    if args.prepend_title:
        titles = {entry.dataset_id: entry.title for entry in bundle.entries}
        methods = [
            (label, _prepend_titles(texts, titles)) for label, texts in methods
        ]
    ks = _parse_ks(args.ks) if args.ks else config.ks
    new_rows: list[tuple[str, int, float]] = []
    for label, texts in methods:
        result = evaluate(
            bundle,
            texts,
            ks=ks,
            method=label,
            k1=config.k1,
            b=config.b,
            epsilon=config.epsilon,
        )
        for warning in result.warnings:
            _err(f"{label}: {warning}")
        for k in ks:
            new_rows.append((label, k, result.mean_ndcg[k]))
    out_path = (
        Path(args.out)
        if args.out
        else Path(config.output_dir) / "retrieval_results.csv"
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _upsert_results_csv(out_path, new_rows)
    for method, k, mean in new_rows:
        print(f"{method},{k},{mean:.6f}")
    print(f"results -> {out_path}")
    return 0


def cmd_eval_quality(args) -> int:
    config = load_config(args.config)
    if config.manifest_path is None:
        raise ConfigurationError("config has no [paths] manifest entry")
    entries = load_manifest(config.manifest_path)
    references = {
        entry.dataset_id: entry.description
        for entry in entries
        if entry.description
    }
    methods = _collect_methods(args, originals=dict(references))
    corpus = dict(methods)

    out_dir = Path(config.output_dir) / "quality"
    out_dir.mkdir(parents=True, exist_ok=True)

    ref_rows, ref_warnings = score_references(corpus, references)
    for warning in ref_warnings:
        _err(warning)
    atomic_write_text(
        out_dir / "reference_scores.csv",
        reference_scores_csv(ref_rows, scale_100=args.scale_100),
    )

    templates = TemplateSet()
    gateway = build_gateway(config)
    judge_label = args.judge_label or config.provider.model
    pairs = args.pairs_per_dataset or config.pairs_per_dataset
    if len(corpus) >= 2:
        report = cross_evaluate(
            corpus,
            {judge_label: gateway},
            templates,
            pairs_per_dataset=pairs,
            seed=config.seed,
            workers=args.jobs,
        )
    else:
        rows, errors = pointwise_table(
            corpus, gateway, templates, judge=judge_label, workers=args.jobs
        )
        report = QualityReport(
            pointwise_rows=rows,
            errors=errors,
            warnings=["single method given: pairwise judging skipped"],
            bertscore={method: None for method in corpus},
        )
    for warning in report.warnings:
        _err(warning)
    for error in report.errors:
        _err(json.dumps(error, sort_keys=True))
    atomic_write_text(out_dir / "pointwise_scores.csv", report.pointwise_csv())
    atomic_write_text(out_dir / "win_rates.csv", report.win_rates_csv())
    print(
        f"{len(ref_rows)} reference rows, {len(report.pointwise_rows)} pointwise "
        f"rows, {len(report.win_rate_rows)} win-rate rows -> {out_dir}"
    )
    return 2 if report.errors else 0


def cmd_bench_stats(args) -> int:
    config = load_config(args.config)
    if config.benchmark_dir is None:
        raise ConfigurationError("config has no [paths] benchmark_dir entry")
    bundle = load_benchmark(config.benchmark_dir)
    print(json.dumps(bench_stats(bundle), indent=2, sort_keys=True))
    return 0


def cmd_cost_report(args) -> int:
    run_dir = Path(args.run_dir)
    cost_path = run_dir / "cost.csv"
    if not cost_path.is_file():
        raise ConfigurationError(f"no cost.csv in {run_dir}; not a run directory?")
    with open(cost_path, encoding="utf-8") as handle:
        stage_rows = list(csv.DictReader(handle))
    if not stage_rows:
        raise ConfigurationError(f"{cost_path} has no stage rows (empty ledger)")

    exec_mode = None
    config_path = run_dir / "config.json"
    if config_path.is_file():
        run_config = json.loads(config_path.read_text(encoding="utf-8"))
        exec_mode = run_config.get("pipeline", {}).get("exec_mode")

    out = io.StringIO()
    out.write(f"run: {run_dir}\n")
    if exec_mode is not None:
        out.write(f"exec_mode: {exec_mode}\n")
    out.write("stage totals:\n")
    out.write("tag,calls,total_input_tokens,total_output_tokens,"
              "total_latency_ms,mean_input_tokens_per_call\n")
    for row in stage_rows:
        calls = int(row["calls"])
        input_tokens = int(row["input_tokens"])
        mean_input = input_tokens / calls if calls else 0.0
        out.write(
            f"{row['tag']},{calls},{input_tokens},{row['output_tokens']},"
            f"{row['latency_ms']},{mean_input:.2f}\n"
        )

    by_dataset_path = run_dir / "cost_by_dataset.csv"
    if by_dataset_path.is_file():
        totals: dict[str, dict[str, int]] = {}
        order: list[str] = []
        with open(by_dataset_path, encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                dataset_id = row["dataset_id"]
                if dataset_id not in totals:
                    totals[dataset_id] = {
                        "calls": 0, "input_tokens": 0,
                        "output_tokens": 0, "latency_ms": 0,
                    }
                    order.append(dataset_id)
                for key in totals[dataset_id]:
                    totals[dataset_id][key] += int(row[key])
        out.write("dataset totals:\n")
        out.write("dataset_id,calls,input_tokens,output_tokens,latency_ms\n")
        for dataset_id in order:
            slot = totals[dataset_id]
            out.write(
                f"{dataset_id},{slot['calls']},{slot['input_tokens']},"
                f"{slot['output_tokens']},{slot['latency_ms']}\n"
            )

    if exec_mode == "gp":
        out.write(
            "note: grouped prompting ('gp') tokenizes shared semantic-profile "
            "instructions once per column batch; expect lower semantic-profile "
            "input tokens than per-column ('seq'/'mt') runs of the same corpus.\n"
        )
    elif exec_mode in ("seq", "mt"):
        out.write(
            "note: per-column semantic profiling repeats shared instructions "
            "for every column; grouped mode ('gp') would reduce "
            "semantic-profile input tokens.\n"
        )
    print(out.getvalue(), end="")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_eval_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--input",
        action="append",
        dest="inputs",
        metavar="LABEL=PATH",
        help="labeled descriptions.jsonl to evaluate (repeatable)",
    )
    parser.add_argument(
        "--descriptions",
        help="descriptions.jsonl evaluated under --method-label",
    )
    parser.add_argument(
        "--method-label",
        default="method",
        help="label for --descriptions rows (default: method)",
    )
    parser.add_argument(
        "--include-original",
        action="store_true",
        help="also evaluate the catalog's original descriptions",
    )
    parser.add_argument(
        "--mode",
        choices=["UFD", "SFD", "last"],
        default="last",
        help="which record kind to read per dataset (default: last per dataset)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="datadesc",
        description="Profile tabular datasets, generate LLM descriptions, "
        "and evaluate them for search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_profile = sub.add_parser("profile", help="content-profile manifest datasets")
    p_profile.add_argument("--config", required=True)
    p_profile.add_argument("--dataset", help="profile only this dataset id")
    p_profile.set_defaults(handler=cmd_profile)

    p_describe = sub.add_parser("describe", help="generate descriptions")
    p_describe.add_argument("--config", required=True)
    p_describe.add_argument("--exec", dest="exec_mode", choices=["seq", "mt", "gp"])
    p_describe.add_argument("--workers", type=int)
    p_describe.add_argument("--batch-size", type=int)
    p_describe.add_argument("--no-sp", action="store_true",
                            help="disable semantic profiling (ablation)")
    p_describe.add_argument("--no-sfd", action="store_true",
                            help="disable search-focused descriptions (ablation)")
    p_describe.add_argument("--sample-size", type=int)
    p_describe.add_argument("--seed", type=int)
    p_describe.add_argument("--jobs", type=int, default=1,
                            help="dataset-level parallelism (default 1)")
    p_describe.set_defaults(handler=cmd_describe)

    p_index = sub.add_parser("index", help="build a BM25 index over descriptions")
    p_index.add_argument("--config", required=True)
    p_index.add_argument("--descriptions", required=True)
    p_index.add_argument("--mode", choices=["UFD", "SFD", "last"], default="last")
    p_index.add_argument(
        "--prepend-title",
        action="store_true",
        help="index title + description instead of description alone",
    )
    p_index.add_argument("--out", required=True)
    p_index.set_defaults(handler=cmd_index)

    p_search = sub.add_parser("search", help="query a saved BM25 index")
    p_search.add_argument("--index", required=True)
    p_search.add_argument("--query", required=True)
    p_search.add_argument("--cutoff", type=int, default=10)
    p_search.set_defaults(handler=cmd_search)

    p_eval_r = sub.add_parser(
        "eval-retrieval", help="NDCG@k of methods against the benchmark"
    )
    p_eval_r.add_argument("--config", required=True)
    _add_eval_inputs(p_eval_r)
    p_eval_r.add_argument("--ks", help="cutoffs, e.g. 5,10,15,20")
    p_eval_r.add_argument(
        "--prepend-title",
        action="store_true",
        help="index title + description instead of description alone",
    )
    p_eval_r.add_argument("--out", help="results CSV (default <output_dir>/retrieval_results.csv)")
    p_eval_r.set_defaults(handler=cmd_eval_retrieval)

    p_eval_q = sub.add_parser(
        "eval-quality", help="reference metrics and LLM-judge scores"
    )
    p_eval_q.add_argument("--config", required=True)
    _add_eval_inputs(p_eval_q)
    p_eval_q.add_argument("--pairs-per-dataset", type=int)
    p_eval_q.add_argument("--judge-label", help="label for the judge column")
    p_eval_q.add_argument(
        "--scale-100",
        action="store_true",
        help="render reference metrics x100 (0-100 scale) instead of 0-1",
    )
    p_eval_q.add_argument("--jobs", type=int, default=1)
    p_eval_q.set_defaults(handler=cmd_eval_quality)

    p_stats = sub.add_parser("bench-stats", help="benchmark bundle statistics")
    p_stats.add_argument("--config", required=True)
    p_stats.set_defaults(handler=cmd_bench_stats)

    p_cost = sub.add_parser("cost-report", help="summarize a run's cost files")
    p_cost.add_argument("run_dir")
    p_cost.set_defaults(handler=cmd_cost_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except BenchmarkValidationError as exc:
        _err(f"error: {exc}")
        for offender in exc.offenders[:20]:
            _err(f"  - {offender}")
        return 1
    except DatadescError as exc:
        _err(f"error: {exc}")
        return 1
    except OSError as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
