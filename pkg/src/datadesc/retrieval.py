"""BM25 retrieval benchmark: index, ranking, NDCG, and benchmark bundles.

The index is a classic Okapi BM25 inverted index over description texts.
IDF(t) = ln((N - n(t) + 0.5) / (n(t) + 0.5)); negative IDFs (terms in more
than half the corpus) are floored at epsilon times the mean of the positive
IDFs, so common terms contribute a small positive weight instead of a
negative one. The tokenizer is intentionally simple — lowercase, split on
any non-alphanumeric, no stemming or stopwords — and is shared verbatim
between indexing and querying.

NDCG@k uses exponential gain (2^rel - 1) by default with a ``linear`` flag
for sensitivity checks; queries without any positively graded document score
0 and still count toward means.
"""
from __future__ import annotations

import logging
import math
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import BenchmarkValidationError, EmptyCorpusError, MalformedInputError
from .tables import ManifestEntry, load_manifest

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+")

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75
DEFAULT_EPSILON = 0.25
DEFAULT_KS = (5, 10, 15, 20)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric run; drops empty tokens."""
    return _TOKEN_RE.findall(text.lower())


# --------------------------------------------------------------------------
# Index


@dataclass
class Bm25Index:
    """Immutable-after-build inverted index with Okapi BM25 parameters."""

    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    epsilon: float = DEFAULT_EPSILON
    idf: dict[str, float] = field(default_factory=dict)

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def avgdl(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths.values()) / len(self.doc_lengths)

    def compute_idf(self) -> None:
        """Fill ``idf`` from postings; negative values floored at eps * mean+."""
        n_docs = self.doc_count
        raw = {
            term: math.log((n_docs - len(docs) + 0.5) / (len(docs) + 0.5))
            for term, docs in self.postings.items()
        }
        positives = [value for value in raw.values() if value > 0]
        floor = self.epsilon * (sum(positives) / len(positives)) if positives else 0.0
        self.idf = {
            term: value if value > 0 else floor for term, value in raw.items()
        }

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "epsilon": self.epsilon,
            "doc_lengths": dict(sorted(self.doc_lengths.items())),
            "postings": {
                term: [[doc_id, tf] for doc_id, tf in docs]
                for term, docs in sorted(self.postings.items())
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Bm25Index":
        index = cls(
            postings={
                term: [(doc_id, int(tf)) for doc_id, tf in docs]
                for term, docs in obj["postings"].items()
            },
            doc_lengths={doc: int(n) for doc, n in obj["doc_lengths"].items()},
            k1=float(obj["k1"]),
            b=float(obj["b"]),
            epsilon=float(obj["epsilon"]),
        )
        index.compute_idf()
        return index


def build_index(
    docs: Mapping[str, str],
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    epsilon: float = DEFAULT_EPSILON,
) -> Bm25Index:
    """Index a corpus of {dataset_id: description text}. Requires >= 1 doc."""
    if not docs:
        raise EmptyCorpusError("cannot build a BM25 index over an empty corpus")
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    # Sorted ids make postings lists and stats independent of insertion order.
    for doc_id in sorted(docs):
        tokens = tokenize(docs[doc_id])
        doc_lengths[doc_id] = len(tokens)
        for token in tokens:
            counts = postings.setdefault(token, {})
            counts[doc_id] = counts.get(doc_id, 0) + 1
    index = Bm25Index(
        postings={
            term: sorted(counts.items()) for term, counts in sorted(postings.items())
        },
        doc_lengths=doc_lengths,
        k1=k1,
        b=b,
        epsilon=epsilon,
    )
    index.compute_idf()
    return index


# --------------------------------------------------------------------------
# Ranking


@dataclass(frozen=True)
class RankedList:
    """Scored documents, scores non-increasing, ties broken by id ascending."""

    query_id: str
    ranking: tuple[tuple[str, float], ...]


def score(
    query: str,
    index: Bm25Index,
    cutoff: int | None = None,
    query_id: str = "",
) -> RankedList:
    """Rank every document for a keyword query.

    Zero-score documents are kept at the tail (ordered by id) up to ``cutoff``
    so NDCG cutoffs always see a full ranking.
    """
    scores = {doc_id: 0.0 for doc_id in index.doc_lengths}
    avgdl = index.avgdl
    for term in tokenize(query):
        docs = index.postings.get(term)
        if not docs:
            continue
        idf = index.idf[term]
        for doc_id, tf in docs:
            norm = index.k1 * (
                1 - index.b + index.b * index.doc_lengths[doc_id] / avgdl
            )
            scores[doc_id] += idf * tf * (index.k1 + 1) / (tf + norm)
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    if cutoff is not None:
        ordered = ordered[:cutoff]
    return RankedList(query_id=query_id, ranking=tuple(ordered))


# --------------------------------------------------------------------------
# NDCG


def _gain(rel: int, linear: bool) -> float:
    return float(rel) if linear else float(2**rel - 1)


def query_grades(qrels: Mapping[tuple[str, str], int], query_id: str) -> dict[str, int]:
    return {doc: g for (qid, doc), g in qrels.items() if qid == query_id}


def ndcg_at_k(
    ranking: RankedList,
    qrels: Mapping[tuple[str, str], int],
    k: int,
    linear: bool = False,
) -> float:
    """NDCG@k with unjudged docs as grade 0; 0.0 when no positive grades."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    grades = query_grades(qrels, ranking.query_id)
    if not any(grade > 0 for grade in grades.values()):
        return 0.0
    dcg = 0.0
    for i, (doc_id, _) in enumerate(ranking.ranking[:k], start=1):
        dcg += _gain(grades.get(doc_id, 0), linear) / math.log2(i + 1)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = sum(
        _gain(grade, linear) / math.log2(i + 1) for i, grade in enumerate(ideal, start=1)
    )
    return dcg / idcg


# --------------------------------------------------------------------------
# Benchmark bundles


@dataclass
class BenchmarkBundle:
    """Queries, graded qrels, and the corpus manifest of one benchmark."""

    queries: list[tuple[str, str]]
    qrels: dict[tuple[str, str], int]
    entries: list[ManifestEntry]

    @property
    def corpus_ids(self) -> set[str]:
        return {entry.dataset_id for entry in self.entries}

    def original_descriptions(self) -> dict[str, str]:
        """Per-dataset original (catalog) descriptions; missing become ''."""
        return {entry.dataset_id: entry.description or "" for entry in self.entries}


def _read_tsv(path: Path, n_fields: int) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", n_fields - 1)
            if len(parts) != n_fields:
                raise MalformedInputError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields"
                )
            rows.append(parts)
    return rows


def load_benchmark(directory: str | Path) -> BenchmarkBundle:
    """Load queries.tsv, qrels.tsv, and manifest.jsonl from a bundle directory.

    Raises BenchmarkValidationError listing every dangling qrels reference
    (unknown query_id or dataset_id) and every negative grade.
    """
    directory = Path(directory)
    queries: list[tuple[str, str]] = []
    seen_q: set[str] = set()
    for query_id, text in _read_tsv(directory / "queries.tsv", 2):
        if query_id in seen_q:
            raise MalformedInputError(f"duplicate query_id {query_id!r} in queries.tsv")
        seen_q.add(query_id)
        queries.append((query_id, text))

    qrels: dict[tuple[str, str], int] = {}
    for query_id, dataset_id, grade_text in _read_tsv(directory / "qrels.tsv", 3):
        try:
            grade = int(grade_text)
        except ValueError as exc:
            raise MalformedInputError(
                f"qrels grade must be an integer, got {grade_text!r}"
            ) from exc
        qrels[(query_id, dataset_id)] = grade

    entries = load_manifest(directory / "manifest.jsonl")
    bundle = BenchmarkBundle(queries=queries, qrels=qrels, entries=entries)

    corpus_ids = bundle.corpus_ids
    offenders = []
    for (query_id, dataset_id), grade in sorted(bundle.qrels.items()):
        if query_id not in seen_q:
            offenders.append(f"qrels query_id {query_id!r} not in queries.tsv")
        if dataset_id not in corpus_ids:
            offenders.append(f"qrels dataset_id {dataset_id!r} not in manifest")
        if grade < 0:
            offenders.append(f"qrels grade for ({query_id!r}, {dataset_id!r}) is negative")
    if offenders:
        raise BenchmarkValidationError(
            f"benchmark bundle {directory} failed validation "
            f"({len(offenders)} offending references)",
            offenders=offenders,
        )
    return bundle


def bench_stats(bundle: BenchmarkBundle) -> dict:
    """Summary statistics in the benchmark-table schema."""
    relevant_counts = []
    for query_id, _ in bundle.queries:
        relevant = sum(
            1
            for (qid, _doc), grade in bundle.qrels.items()
            if qid == query_id and grade > 0
        )
        relevant_counts.append(relevant)
    if relevant_counts:
        rel_stats = {
            "min": min(relevant_counts),
            "avg": statistics.mean(relevant_counts),
            "max": max(relevant_counts),
        }
    else:
        rel_stats = {"min": 0, "avg": 0.0, "max": 0}
    return {
        "queries": len(bundle.queries),
        "tables": len(bundle.entries),
        "relevant_tables_per_query": rel_stats,
    }


# --------------------------------------------------------------------------
# Evaluation


@dataclass
class EvaluationResult:
    """Mean NDCG@k per cutoff for one labeled description method."""

    method: str
    ks: tuple[int, ...]
    per_query: dict[str, dict[int, float]]
    mean_ndcg: dict[int, float]
    warnings: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["method,k,mean_ndcg"]
        for k in self.ks:
            lines.append(f"{self.method},{k},{self.mean_ndcg[k]:.6f}")
        return "\n".join(lines) + "\n"


def evaluate(
    bundle: BenchmarkBundle,
    descriptions: Mapping[str, str],
    ks: Sequence[int] = DEFAULT_KS,
    method: str = "method",
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    epsilon: float = DEFAULT_EPSILON,
    linear: bool = False,
) -> EvaluationResult:
    """Index the given descriptions and compute mean NDCG@k over all queries.

    Corpus datasets without a description are indexed as empty text (they can
    never match) and reported as warnings.
    """
    ks = tuple(ks)
    if not ks or any(k < 1 for k in ks):
        raise ValueError(f"cutoffs must be positive, got {ks!r}")
    warnings: list[str] = []
    docs: dict[str, str] = {}
    for dataset_id in sorted(bundle.corpus_ids):
        text = descriptions.get(dataset_id)
        if text is None:
            warnings.append(f"dataset {dataset_id!r} has no description; indexing empty text")
            logger.warning(warnings[-1])
            text = ""
        docs[dataset_id] = text
    index = build_index(docs, k1=k1, b=b, epsilon=epsilon)

    per_query: dict[str, dict[int, float]] = {}
    for query_id, text in bundle.queries:
        ranked = score(text, index, query_id=query_id)
        per_query[query_id] = {
            k: ndcg_at_k(ranked, bundle.qrels, k, linear=linear) for k in ks
        }
    mean_ndcg = {
        k: (
            sum(per_query[qid][k] for qid, _ in bundle.queries) / len(bundle.queries)
            if bundle.queries
            else 0.0
        )
        for k in ks
    }
    return EvaluationResult(
        method=method,
        ks=ks,
        per_query=per_query,
        mean_ndcg=mean_ndcg,
        warnings=warnings,
    )
