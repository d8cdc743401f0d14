"""Description quality scoring.

Two families of metrics over generated descriptions:

* Reference-based: ROUGE (unigram/bigram/LCS F1) and METEOR (exact + stem
  unigram alignment with a fragmentation penalty) against the dataset's
  original description. Both share the retrieval tokenizer so reference and
  retrieval experiments see the same token stream. METEOR's synonymy stage is
  deliberately omitted (no lexical database dependency).
* Reference-free: an LLM judge scores single descriptions on completeness,
  conciseness, and readability (pointwise, 1-10 each), and compares pairs of
  descriptions produced by different methods (pairwise win rates). Every pair
  is judged twice with swapped presentation order to cancel positional bias;
  ties count as half a victory to each side so two-method win rates sum to 1.
"""
from __future__ import annotations

import random
import re
from collections import Counter
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from .errors import ContractViolationError, ProviderUnavailableError, ScoreParseError
from .gateway import CompletionRequest, LlmGateway
from .prompts import TemplateSet
from .retrieval import tokenize
from .stemming import porter_stem

DIMENSIONS = ("completeness", "conciseness", "readability")
DEFAULT_PAIRS_PER_DATASET = 10

POINTWISE_REPAIR = (
    "Your previous reply did not contain scores in the required form. Reply "
    'with only the line "Completeness: <1-10>, Conciseness: <1-10>, '
    'Readability: <1-10>".'
)
PAIRWISE_REPAIR = (
    "Your previous reply did not follow the verdict form. Reply with only "
    'the line "Completeness: __, Conciseness: __, Readability: __".'
)

_POINTWISE_RE = re.compile(
    r"completeness\s*:\s*(\d+)\s*,?\s*conciseness\s*:\s*(\d+)\s*,?\s*readability\s*:\s*(\d+)",
    re.IGNORECASE,
)
_PAIRWISE_RE = re.compile(
    r"completeness\s*:\s*(a|b|tie)\b\s*,?\s*conciseness\s*:\s*(a|b|tie)\b\s*,?"
    r"\s*readability\s*:\s*(a|b|tie)\b",
    re.IGNORECASE,
)


# ---------------------------------------------------------------------------
# Reference-based metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceScores:
    """METEOR plus the three ROUGE F1 variants, each in [0, 1]."""

    meteor: float
    rouge_1_f: float
    rouge_2_f: float
    rouge_l_f: float

    def __post_init__(self) -> None:
        for name in ("meteor", "rouge_1_f", "rouge_2_f", "rouge_l_f"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractViolationError(f"{name} must be in [0, 1], got {value}")


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _rouge_n(candidate: list[str], reference: list[str], n: int) -> float:
    cand_grams = _ngrams(candidate, n)
    ref_grams = _ngrams(reference, n)
    if not cand_grams or not ref_grams:
        return 0.0
    overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
    precision = overlap / sum(cand_grams.values())
    recall = overlap / sum(ref_grams.values())
    return _f1(precision, recall)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0] * (len(b) + 1)
        for j, other in enumerate(b, start=1):
            if token == other:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge(candidate: str, reference: str) -> tuple[float, float, float]:
    """ROUGE-1, ROUGE-2, and ROUGE-L F1 over the shared tokenizer output.

    N-gram overlaps are clipped (a candidate n-gram counts at most as often as
    it appears in the reference). An empty candidate or reference scores 0.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return (0.0, 0.0, 0.0)
    rouge_1 = _rouge_n(cand, ref, 1)
    rouge_2 = _rouge_n(cand, ref, 2)
    lcs = _lcs_length(cand, ref)
    rouge_l = _f1(lcs / len(cand), lcs / len(ref))
    return (rouge_1, rouge_2, rouge_l)


def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Greedy two-stage unigram alignment: exact matches, then stem matches.

    Each stage walks the candidate in order and pairs every token with the
    first not-yet-matched reference token it equals (by surface form in stage
    one, by Porter stem in stage two). Returns (candidate_index,
    reference_index) pairs sorted by candidate index.
    """
    matched_cand: set[int] = set()
    matched_ref: set[int] = set()
    matches: list[tuple[int, int]] = []

    def run_stage(key: Callable[[str], str]) -> None:
        ref_keys = [key(token) for token in reference]
        for i, token in enumerate(candidate):
            if i in matched_cand:
                continue
            wanted = key(token)
            for j, ref_key in enumerate(ref_keys):
                if j in matched_ref:
                    continue
                if wanted == ref_key:
                    matched_cand.add(i)
                    matched_ref.add(j)
                    matches.append((i, j))
                    break

    run_stage(lambda token: token)
    run_stage(porter_stem)
    return sorted(matches)


def _chunk_count(matches: list[tuple[int, int]]) -> int:
    """Number of maximal runs of matches contiguous in both texts."""
    chunks = 0
    previous: tuple[int, int] | None = None
    for i, j in matches:
        if previous is None or i != previous[0] + 1 or j != previous[1] + 1:
            chunks += 1
        previous = (i, j)
    return chunks


def meteor(candidate: str, reference: str) -> float:
    """METEOR with exact + stem alignment stages (synonymy omitted).

    score = F_mean * (1 - penalty), where F_mean = 10PR / (P + 9R),
    penalty = 0.5 * (chunks / matches)^3, P = matches/len(candidate), and
    R = matches/len(reference); 0 when nothing aligns.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    matches = _align(cand, ref)
    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    f_mean = 10.0 * precision * recall / (precision + 9.0 * recall)
    penalty = 0.5 * (_chunk_count(matches) / m) ** 3
    return f_mean * (1.0 - penalty)


def reference_scores(candidate: str, reference: str) -> ReferenceScores:
    rouge_1, rouge_2, rouge_l = rouge(candidate, reference)
    return ReferenceScores(
        meteor=meteor(candidate, reference),
        rouge_1_f=rouge_1,
        rouge_2_f=rouge_2,
        rouge_l_f=rouge_l,
    )


def score_references(
    descriptions: Mapping[str, Mapping[str, str]],
    references: Mapping[str, str],
) -> tuple[list[dict], list[str]]:
    """Score every (method, dataset) description against its reference.

    ``descriptions`` maps method label -> dataset_id -> text. Datasets with no
    reference are skipped with a warning. Rows are sorted by (dataset_id,
    method) for stable output.
    """
    rows: list[dict] = []
    warnings: list[str] = []
    for method in sorted(descriptions):
        for dataset_id, text in sorted(descriptions[method].items()):
            if dataset_id not in references:
                warnings.append(
                    f"dataset {dataset_id!r} has no reference description; skipped"
                )
                continue
            scores = reference_scores(text, references[dataset_id])
            rows.append(
                {
                    "dataset_id": dataset_id,
                    "method": method,
                    "meteor": scores.meteor,
                    "rouge1_f": scores.rouge_1_f,
                    "rouge2_f": scores.rouge_2_f,
                    "rougeL_f": scores.rouge_l_f,
                }
            )
    rows.sort(key=lambda row: (row["dataset_id"], row["method"]))
    return rows, warnings


def reference_scores_csv(rows: list[dict], scale_100: bool = False) -> str:
    """Scores are computed in [0, 1]; ``scale_100`` renders them x100 with two
    decimals for side-by-side reading against 0-100-style report tables."""
    lines = ["dataset_id,method,meteor,rouge1_f,rouge2_f,rougeL_f"]
    for row in rows:
        if scale_100:
            values = ",".join(
                f"{row[key] * 100:.2f}"
                for key in ("meteor", "rouge1_f", "rouge2_f", "rougeL_f")
            )
        else:
            values = ",".join(
                f"{row[key]:.6f}"
                for key in ("meteor", "rouge1_f", "rouge2_f", "rougeL_f")
            )
        lines.append(f"{row['dataset_id']},{row['method']},{values}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Pointwise judging
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointwiseScores:
    """One judge's 1-10 ratings of a single description."""

    completeness: int
    conciseness: int
    readability: int

    def __post_init__(self) -> None:
        for name in DIMENSIONS:
            value = getattr(self, name)
            if not 1 <= value <= 10:
                raise ContractViolationError(f"{name} must be in [1, 10], got {value}")


def parse_pointwise_scores(text: str) -> PointwiseScores | None:
    """Extract the "Completeness: X, Conciseness: Y, Readability: Z" line.

    Tolerates case and whitespace variation; returns None when the line is
    absent or any score falls outside 1-10.
    """
    match = _POINTWISE_RE.search(text)
    if match is None:
        return None
    values = [int(group) for group in match.groups()]
    if any(not 1 <= value <= 10 for value in values):
        return None
    return PointwiseScores(*values)


def judge_pointwise(
    description: str,
    gateway: LlmGateway,
    templates: TemplateSet,
    *,
    temperature: float = 0.0,
    max_output_tokens: int = 128,
) -> PointwiseScores:
    """Rate one description; one parse retry, then ScoreParseError."""
    prompt = templates.fill("judge_pointwise.txt", description=description)
    last_response = ""
    for attempt_prompt in (prompt, prompt + "\n" + POINTWISE_REPAIR):
        result = gateway.complete(
            CompletionRequest(
                tag="judge-pointwise",
                user_prompt=attempt_prompt,
                temperature=temperature,
                max_output_tokens=max_output_tokens,
            )
        )
        last_response = result.text
        scores = parse_pointwise_scores(result.text)
        if scores is not None:
            return scores
    raise ScoreParseError(
        "judge response did not contain parseable 1-10 scores after the retry",
        raw_response=last_response,
    )


def pointwise_table(
    corpus: Mapping[str, Mapping[str, str]],
    gateway: LlmGateway,
    templates: TemplateSet,
    *,
    judge: str = "judge",
    workers: int = 1,
    temperature: float = 0.0,
) -> tuple[list[dict], list[dict]]:
    """Pointwise-score every (dataset, method) description.

    Returns (rows, errors): rows carry the three scores, errors record items
    the judge could not score (parse failure after retry, or provider down).
    """
    items = [
        (dataset_id, method, corpus[method][dataset_id])
        for method in sorted(corpus)
        for dataset_id in sorted(corpus[method])
    ]

    def score_item(item: tuple[str, str, str]) -> tuple[dict | None, dict | None]:
        dataset_id, method, text = item
        try:
            scores = judge_pointwise(
                text, gateway, templates, temperature=temperature
            )
        except (ScoreParseError, ProviderUnavailableError) as exc:
            return None, {
                "dataset_id": dataset_id,
                "method": method,
                "judge": judge,
                "error": str(exc),
            }
        return {
            "dataset_id": dataset_id,
            "method": method,
            "judge": judge,
            "completeness": scores.completeness,
            "conciseness": scores.conciseness,
            "readability": scores.readability,
        }, None

    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(score_item, items))
    else:
        results = [score_item(item) for item in items]

    rows = [row for row, _ in results if row is not None]
    errors = [error for _, error in results if error is not None]
    rows.sort(key=lambda row: (row["dataset_id"], row["method"]))
    return rows, errors


def pointwise_scores_csv(rows: list[dict]) -> str:
    lines = ["dataset_id,method,judge,completeness,conciseness,readability"]
    for row in rows:
        lines.append(
            f"{row['dataset_id']},{row['method']},{row['judge']},"
            f"{row['completeness']},{row['conciseness']},{row['readability']}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Pairwise judging
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairwiseOutcome:
    """One dimension's verdict from one presentation of a method pair.

    ``winner`` is relative to (method_a, method_b); ``presentation_order``
    records which method's description was shown as Description A ("ab" means
    method_a was shown first).
    """

    method_a: str
    method_b: str
    dimension: str
    winner: str
    presentation_order: str

    def __post_init__(self) -> None:
        if self.method_a == self.method_b:
            raise ContractViolationError("pairwise outcome needs distinct methods")
        if self.dimension not in DIMENSIONS:
            raise ContractViolationError(f"unknown dimension {self.dimension!r}")
        if self.winner not in ("a", "b", "tie"):
            raise ContractViolationError(f"winner must be a|b|tie, got {self.winner!r}")
        if self.presentation_order not in ("ab", "ba"):
            raise ContractViolationError(
                f"presentation_order must be ab|ba, got {self.presentation_order!r}"
            )


def parse_pairwise_verdicts(text: str) -> tuple[str, str, str] | None:
    """Extract (completeness, conciseness, readability) verdicts, lowercased
    to "a" | "b" | "tie"; None when the verdict line is absent."""
    match = _PAIRWISE_RE.search(text)
    if match is None:
        return None
    first, second, third = (group.lower() for group in match.groups())
    return (first, second, third)


def _judge_pair_once(
    description_first: str,
    description_second: str,
    gateway: LlmGateway,
    templates: TemplateSet,
    temperature: float,
    max_output_tokens: int,
) -> tuple[str, str, str]:
    """One pairwise judgment (first shown as A); one parse retry."""
    prompt = templates.fill(
        "judge_pairwise.txt",
        description_a=description_first,
        description_b=description_second,
    )
    last_response = ""
    for attempt_prompt in (prompt, prompt + "\n" + PAIRWISE_REPAIR):
        result = gateway.complete(
            CompletionRequest(
                tag="judge-pairwise",
                user_prompt=attempt_prompt,
                temperature=temperature,
                max_output_tokens=max_output_tokens,
            )
        )
        last_response = result.text
        verdicts = parse_pairwise_verdicts(result.text)
        if verdicts is not None:
            return verdicts
    raise ScoreParseError(
        "judge response did not contain parseable A/B/Tie verdicts after the retry",
        raw_response=last_response,
    )


@dataclass
class PairwiseReport:
    """Aggregated pairwise results for one judge.

    ``victories`` and ``participations`` are keyed by (method, dimension);
    ties add half a victory to each side. Dropped judgments (judge failures)
    appear in ``dropped`` and count toward neither victories nor
    participations.
    """

    judge: str
    pairs_sampled: int = 0
    outcomes: list[PairwiseOutcome] = field(default_factory=list)
    victories: dict[tuple[str, str], float] = field(default_factory=dict)
    participations: dict[tuple[str, str], int] = field(default_factory=dict)
    dropped: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    methods: tuple[str, ...] = ()

    def win_rate(self, method: str, dimension: str) -> float:
        participated = self.participations.get((method, dimension), 0)
        if participated == 0:
            return 0.0
        return self.victories.get((method, dimension), 0.0) / participated

    def win_rate_rows(self) -> list[dict]:
        return [
            {
                "method": method,
                "dimension": dimension,
                "judge": self.judge,
                "win_rate": self.win_rate(method, dimension),
            }
            for method in self.methods
            for dimension in DIMENSIONS
        ]


def judge_pairwise(
    corpus: Mapping[str, Mapping[str, str]],
    gateway: LlmGateway,
    templates: TemplateSet,
    *,
    pairs_per_dataset: int = DEFAULT_PAIRS_PER_DATASET,
    seed: int = 0,
    judge: str = "judge",
    workers: int = 1,
    temperature: float = 0.0,
    max_output_tokens: int = 128,
) -> PairwiseReport:
    """Sample and judge description pairs per dataset; aggregate win rates.

    Per dataset, ``pairs_per_dataset`` unordered pairs of distinct methods are
    drawn (with replacement across draws) by a generator seeded with
    ``f"{seed}|{dataset_id}"``, so sampling is deterministic and independent
    of dataset iteration order. Each pair is judged twice with swapped
    presentation; a failed judgment is dropped from both the numerator and
    denominator and logged in ``report.dropped``.
    """
    if pairs_per_dataset < 1:
        raise ContractViolationError("pairs_per_dataset must be >= 1")
    methods_all = sorted(corpus)
    if len(methods_all) < 2:
        raise ContractViolationError(
            "pairwise judging needs at least two methods, got "
            f"{len(methods_all)}"
        )
    report = PairwiseReport(judge=judge, methods=tuple(methods_all))
    dataset_ids = sorted({did for texts in corpus.values() for did in texts})

    # (dataset_id, method_a, method_b, order, first_text, second_text)
    judgments: list[tuple[str, str, str, str, str, str]] = []
    for dataset_id in dataset_ids:
        methods = sorted(m for m in methods_all if dataset_id in corpus[m])
        if len(methods) < 2:
            report.warnings.append(
                f"dataset {dataset_id!r} has descriptions from fewer than two "
                "methods; skipped"
            )
            continue
        rng = random.Random(f"{seed}|{dataset_id}")
        for _ in range(pairs_per_dataset):
            method_a, method_b = rng.sample(methods, 2)
            report.pairs_sampled += 1
            for order in ("ab", "ba"):
                first, second = (
                    (method_a, method_b) if order == "ab" else (method_b, method_a)
                )
                judgments.append(
                    (
                        dataset_id,
                        method_a,
                        method_b,
                        order,
                        corpus[first][dataset_id],
                        corpus[second][dataset_id],
                    )
                )

    def run_judgment(
        judgment: tuple[str, str, str, str, str, str]
    ) -> tuple[str, str, str] | dict:
        dataset_id, method_a, method_b, order, first_text, second_text = judgment
        try:
            return _judge_pair_once(
                first_text, second_text, gateway, templates,
                temperature, max_output_tokens,
            )
        except (ScoreParseError, ProviderUnavailableError) as exc:
            return {
                "dataset_id": dataset_id,
                "method_a": method_a,
                "method_b": method_b,
                "presentation_order": order,
                "judge": judge,
                "error": str(exc),
            }

    if workers > 1 and len(judgments) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_judgment, judgments))
    else:
        results = [run_judgment(judgment) for judgment in judgments]

    for judgment, result in zip(judgments, results):
        _, method_a, method_b, order, _, _ = judgment
        if isinstance(result, dict):
            report.dropped.append(result)
            continue
        for dimension, verdict in zip(DIMENSIONS, result):
            if verdict == "tie":
                winner = "tie"
            elif (verdict == "a") == (order == "ab"):
                winner = "a"
            else:
                winner = "b"
            report.outcomes.append(
                PairwiseOutcome(method_a, method_b, dimension, winner, order)
            )
            for method in (method_a, method_b):
                key = (method, dimension)
                report.participations[key] = report.participations.get(key, 0) + 1
            if winner == "tie":
                for method in (method_a, method_b):
                    key = (method, dimension)
                    report.victories[key] = report.victories.get(key, 0.0) + 0.5
            else:
                key = (method_a if winner == "a" else method_b, dimension)
                report.victories[key] = report.victories.get(key, 0.0) + 1.0
    return report


def win_rates_csv(rows: list[dict]) -> str:
    lines = ["method,dimension,judge,win_rate"]
    for row in rows:
        lines.append(
            f"{row['method']},{row['dimension']},{row['judge']},{row['win_rate']:.6f}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Cross evaluation
# ---------------------------------------------------------------------------


@dataclass
class QualityReport:
    """Pointwise and pairwise results aggregated across judges.

    ``bertscore`` is a reserved per-method column (always None here) so that
    externally computed BERTScore values can be merged into reports without a
    schema change.
    """

    pointwise_rows: list[dict] = field(default_factory=list)
    win_rate_rows: list[dict] = field(default_factory=list)
    pairwise_reports: dict[str, PairwiseReport] = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    bertscore: dict[str, float | None] = field(default_factory=dict)

    def pointwise_csv(self) -> str:
        return pointwise_scores_csv(self.pointwise_rows)

    def win_rates_csv(self) -> str:
        return win_rates_csv(self.win_rate_rows)


def cross_evaluate(
    corpus: Mapping[str, Mapping[str, str]],
    judges: Mapping[str, LlmGateway],
    templates: TemplateSet,
    *,
    pairs_per_dataset: int = DEFAULT_PAIRS_PER_DATASET,
    seed: int = 0,
    workers: int = 1,
    temperature: float = 0.0,
) -> QualityReport:
    """Run pointwise and pairwise judging under every configured judge.

    Cross-model evaluation expects two judges (each model's output scored by
    the other); a single judge still runs but is flagged with a warning.
    """
    if not judges:
        raise ContractViolationError("cross_evaluate needs at least one judge")
    report = QualityReport(bertscore={method: None for method in sorted(corpus)})
    if len(judges) < 2:
        report.warnings.append(
            "single judge configured; cross-model evaluation expects two"
        )
    for label in sorted(judges):
        gateway = judges[label]
        rows, errors = pointwise_table(
            corpus, gateway, templates,
            judge=label, workers=workers, temperature=temperature,
        )
        report.pointwise_rows.extend(rows)
        report.errors.extend(errors)
        pairwise = judge_pairwise(
            corpus, gateway, templates,
            pairs_per_dataset=pairs_per_dataset, seed=seed, judge=label,
            workers=workers, temperature=temperature,
        )
        report.pairwise_reports[label] = pairwise
        report.win_rate_rows.extend(pairwise.win_rate_rows())
        report.warnings.extend(pairwise.warnings)
        report.errors.extend(pairwise.dropped)
    return report
