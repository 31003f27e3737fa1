"""Automatic metrics, effectiveness measures, and statistical analysis.

All metrics are pure functions with fixed left-to-right reduction order so
results are bit-reproducible. Text metrics operate on whitespace tokens.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np
from scipy import stats

from .errors import (
    EmptyCorpus,
    EmptyInput,
    LengthMismatch,
    NoAfterPrompts,
    NoScorer,
    RankDeficient,
    SchemaError,
    ZeroVariance,
)
from .storyline import Story, StructuredStoryline, TemporalRelation
from .validation import check_aligned, check_non_empty, check_non_empty_corpus

BLEU_EPSILON = 1e-9


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelationDistribution:
    """Shares of BEFORE/AFTER/VAGUE; must sum to one."""

    shares: Mapping[TemporalRelation, float]

    def __post_init__(self):
        total = sum(self.shares.get(r, 0.0) for r in TemporalRelation)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"shares sum to {total}, expected 1")

    def share(self, relation: TemporalRelation) -> float:
        return self.shares.get(relation, 0.0)


@dataclass(frozen=True)
class AnnotationRecord:
    """One human-evaluation result for one (story, model) pair."""

    story_id: str
    model_id: str
    pair_relations: tuple[TemporalRelation, ...]
    coherence: int
    interest_rank: int
    max_rank: int

    def __post_init__(self):
        if self.coherence not in (0, 1):
            raise ValueError("coherence must be 0 or 1")
        if not 1 <= self.interest_rank <= self.max_rank:
            raise ValueError("interest_rank must lie in [1, max_rank]")


@dataclass(frozen=True)
class AfterCounts:
    """Per-story AFTER counts: gold prompts vs relations detected in the
    generated story."""

    gold: tuple[int, ...]
    generated: tuple[int, ...]

    def __post_init__(self):
        check_aligned(self.gold, self.generated, "after counts")
        if any(c < 0 for c in self.gold + self.generated):
            raise ValueError("counts must be non-negative")


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Read human-annotation JSONL:
    {"story_id", "model_id", "pair_relations", "coherence", "interest_rank",
    "max_rank"}."""
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    AnnotationRecord(
                        story_id=str(obj["story_id"]),
                        model_id=str(obj["model_id"]),
                        pair_relations=tuple(
                            TemporalRelation.from_string(r)
                            for r in obj["pair_relations"]
                        ),
                        coherence=int(obj["coherence"]),
                        interest_rank=int(obj["interest_rank"]),
                        max_rank=int(obj["max_rank"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"bad annotation record: {exc}", lineno) from None
    return records


# ---------------------------------------------------------------------------
# Textual quality metrics
# ---------------------------------------------------------------------------

def distinct_ratio(texts: Sequence[str]) -> float:
    """Percentage of distinct tokens over all tokens, pooled over texts."""
    tokens = [t for text in texts for t in text.split()]
    check_non_empty_corpus(tokens, "token stream")
    return 100.0 * len(set(tokens)) / len(tokens)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu3(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU with n-gram order 3, uniform weights, and brevity penalty.

    Zero clipped counts are replaced by a small epsilon so the geometric
    mean stays defined. Returns a score on the 0-100 scale.
    """
    check_aligned(hypotheses, references, "hypotheses vs references")
    check_non_empty_corpus(hypotheses, "hypotheses")
    max_order = 3
    clipped = [0] * max_order
    totals = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = hyp.split()
        r = ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            h_counts = _ngrams(h, n)
            r_counts = _ngrams(r, n)
            totals[n - 1] += sum(h_counts.values())
            clipped[n - 1] += sum(
                min(c, r_counts[g]) for g, c in h_counts.items()
            )
    log_precision = 0.0
    for n in range(max_order):
        if totals[n] == 0:
            return 0.0
        num = clipped[n] if clipped[n] > 0 else BLEU_EPSILON
        log_precision += math.log(num / totals[n]) / max_order
    if hyp_len == 0:
        return 0.0
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Mean per-pair LCS F1 (beta = 1), on the 0-1 scale."""
    check_aligned(hypotheses, references, "hypotheses vs references")
    check_non_empty_corpus(hypotheses, "hypotheses")
    scores = []
    for hyp, ref in zip(hypotheses, references):
        h = hyp.split()
        r = ref.split()
        lcs = _lcs_length(h, r)
        if lcs == 0 or not h or not r:
            scores.append(0.0)
            continue
        precision = lcs / len(h)
        recall = lcs / len(r)
        scores.append(2 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# Temporal effectiveness metrics
# ---------------------------------------------------------------------------

def temporal_diversity(d: RelationDistribution) -> float:
    """Base-2 Shannon entropy of the relation shares (0 log 0 = 0)."""
    entropy = 0.0
    for r in TemporalRelation:
        p = d.share(r)
        if p > 0:
            entropy -= p * math.log2(p)
    return entropy


def relation_distribution(
    annotations: Sequence[AnnotationRecord],
) -> RelationDistribution:
    """Pooled relation shares over every annotated pair."""
    check_non_empty(annotations, "annotations")
    relations = [r for a in annotations for r in a.pair_relations]
    check_non_empty(relations, "pair relations")
    return distribution_from_relations(relations)


def distribution_from_relations(
    relations: Sequence[TemporalRelation],
) -> RelationDistribution:
    check_non_empty(relations, "relations")
    counts = Counter(relations)
    n = len(relations)
    return RelationDistribution({r: counts.get(r, 0) / n for r in TemporalRelation})


def prompt_accuracy(
    prompts: Sequence[TemporalRelation],
    annotated: Sequence[TemporalRelation],
) -> float:
    """Relaxed accuracy over AFTER-prompt positions, as a percentage.

    Only positions whose prompt is AFTER count; an annotation of AFTER or
    VAGUE is correct there (an undetermined order can still be a flashback).
    """
    check_aligned(prompts, annotated, "prompts vs annotations")
    after_positions = [
        a for p, a in zip(prompts, annotated) if p is TemporalRelation.AFTER
    ]
    if not after_positions:
        raise NoAfterPrompts("accuracy is undefined without any AFTER prompt")
    correct = sum(
        a in (TemporalRelation.AFTER, TemporalRelation.VAGUE)
        for a in after_positions
    )
    return 100.0 * correct / len(after_positions)


def after_count_correlation(
    gold: Sequence[float], generated: Sequence[float]
) -> float:
    """Sample Pearson correlation between gold and generated AFTER counts."""
    check_aligned(gold, generated, "after counts")
    if len(gold) < 2:
        raise LengthMismatch("need at least two stories")
    x = np.asarray(gold, dtype=float)
    y = np.asarray(generated, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise ZeroVariance("correlation undefined for constant counts")
    return float(dx @ dy) / denom


def event_coverage(storyline: StructuredStoryline, story: Story) -> float:
    """Fraction of planned event triggers whose token shows up in the story.

    Matching is case-insensitive exact-token; placeholder events with empty
    triggers are excluded from the denominator (0.0 when nothing remains).
    """
    story_tokens = {t.lower() for t in story.text.split()}
    triggers = [e.trigger.lower() for e in storyline.events if e.trigger]
    if not triggers:
        return 0.0
    hit = sum(t in story_tokens for t in triggers)
    return hit / len(triggers)


# ---------------------------------------------------------------------------
# Statistical analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OlsResult:
    """Least-squares fit of y on X plus an intercept."""

    coef: np.ndarray            # one per X column
    intercept: float
    stderr: np.ndarray          # aligned with coef
    intercept_stderr: float
    t_values: np.ndarray
    p_values: np.ndarray        # two-sided, aligned with coef
    intercept_p_value: float
    residuals: np.ndarray
    df_resid: int


def ols_regress(y: Sequence[float], X: Sequence[Sequence[float]]) -> OlsResult:
    """Ordinary least squares via the normal equations.

    X is n rows by k predictor columns; an intercept column is appended
    internally. p-values are two-sided against the t distribution with
    n - (k+1) degrees of freedom. Raises RankDeficient when the augmented
    design is not full column rank.
    """
    y_arr = np.asarray(y, dtype=float)
    X_arr = np.asarray(X, dtype=float)
    if X_arr.ndim == 1:
        X_arr = X_arr[:, None]
    n, k = X_arr.shape
    design = np.hstack([X_arr, np.ones((n, 1))])
    p = design.shape[1]
    if n < p + 1:
        raise RankDeficient(f"need at least {p + 1} rows, got {n}")
    if np.linalg.matrix_rank(design) < p:
        raise RankDeficient("design matrix is rank deficient")
    gram = design.T @ design
    beta = np.linalg.solve(gram, design.T @ y_arr)
    residuals = y_arr - design @ beta
    df = n - p
    sigma2 = float(residuals @ residuals) / df
    cov = sigma2 * np.linalg.inv(gram)
    stderr = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_values = np.where(stderr > 0, beta / stderr, np.inf * np.sign(beta))
    p_values = 2.0 * stats.t.sf(np.abs(t_values), df)
    return OlsResult(
        coef=beta[:k],
        intercept=float(beta[k]),
        stderr=stderr[:k],
        intercept_stderr=float(stderr[k]),
        t_values=t_values[:k],
        p_values=p_values[:k],
        intercept_p_value=float(p_values[k]),
        residuals=residuals,
        df_resid=df,
    )


# ---------------------------------------------------------------------------
# Generated-text perplexity (pluggable frozen scorer)
# ---------------------------------------------------------------------------

class TextScorer(Protocol):
    """A frozen language model able to score raw text."""

    def text_nll(self, text: str) -> tuple[float, int]:
        """Return (total negative log-likelihood, number of scored tokens)."""
        ...


def gen_perplexity(texts: Sequence[str], scorer: Optional[TextScorer]) -> float:
    """Perplexity of generated texts under a frozen scorer model."""
    if scorer is None:
        raise NoScorer("generated-text perplexity needs a scorer model")
    check_non_empty_corpus(texts, "texts")
    total_nll = 0.0
    total_tokens = 0
    for text in texts:
        nll, n = scorer.text_nll(text)
        total_nll += nll
        total_tokens += n
    if total_tokens == 0:
        raise EmptyCorpus("scorer saw no tokens")
    return math.exp(total_nll / total_tokens)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def write_metric_report(
    metrics: Mapping[str, Optional[float]], json_path: str | Path, csv_path: str | Path
) -> None:
    """Emit the metric report as a JSON document and a flat CSV.

    Missing metrics are kept as nulls in the JSON and empty cells in the
    CSV so partial runs stay machine-readable.
    """
    ordered = dict(sorted(metrics.items()))
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(ordered, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("metric,value\n")
        for name, value in ordered.items():
            f.write(f"{name},{'' if value is None else repr(float(value))}\n")
