"""Comparison methods: RAKE, embedding-rank, BM25, and semantic search.

Every method reduces to the same shape - claim in, retrieved tweet-id set
out - so they can be scored side by side against ground truth. The two
threshold methods (BM25 with min-max normalized scores, cosine semantic
search) sweep cuts from 0.3 to 0.9 and keep the best-F1 threshold per
claim. Retweets and quote tweets are excluded everywhere so all methods
see the document universe the keyword path searches.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, bm25_score, search_all_terms
from .embedding import cosine
from .textquery import normalize

__all__ = [
    "MethodResult",
    "ComparisonRow",
    "ComparisonReport",
    "THRESHOLD_SWEEP",
    "METHODS",
    "rake_keywords",
    "rake_query",
    "embed_rank_keywords",
    "threshold_retrieve",
    "precision_recall_f1",
    "compare_methods",
    "write_comparison",
]

THRESHOLD_SWEEP = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
METHODS = ("ltr", "rake", "embed_rank", "bm25", "semantic")


@dataclass(frozen=True)
class MethodResult:
    method: str
    claim_id: str
    retrieved: frozenset[str]
    threshold_used: float | None = None


@dataclass(frozen=True)
class ComparisonRow:
    claim_id: str
    method: str
    precision: float
    recall: float
    f1: float
    retrieved_count: int
    threshold: float | None


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow] = field(default_factory=list)
    reduction_factors: dict[str, float] = field(default_factory=dict)

    def rows_for(self, method: str) -> list[ComparisonRow]:
        return [r for r in self.rows if r.method == method]

    def f1_cdf(self, method: str) -> list[tuple[float, float]]:
        values = sorted(r.f1 for r in self.rows_for(method))
        n = len(values)
        return [(v, (i + 1) / n) for i, v in enumerate(values)]

    def fraction_at_least(self, method: str, f1: float) -> float:
        rows = self.rows_for(method)
        if not rows:
            return 0.0
        return sum(1 for r in rows if r.f1 >= f1) / len(rows)


# --- RAKE ----------------------------------------------------------------------

def rake_keywords(
    claim_text: str, stopwords: frozenset[str] | None = None
) -> list[tuple[tuple[str, ...], float]]:
    """Rank stopword-delimited phrases by summed degree/frequency word scores.

    Returns (phrase tokens, score) pairs, best first; ties keep first
    appearance. An all-stopword claim yields [] with a warning.
    """
    from .textquery import _TOKEN_RE, default_stopwords  # shared tokenizer

    if stopwords is None:
        stopwords = default_stopwords()
    words = _TOKEN_RE.findall(claim_text.lower())
    phrases: list[tuple[str, ...]] = []
    current: list[str] = []
    for word in words:
        if word in stopwords:
            if current:
                phrases.append(tuple(current))
                current = []
        else:
            current.append(word)
    if current:
        phrases.append(tuple(current))
    if not phrases:
        warnings.warn("claim contains no content words; RAKE produced nothing")
        return []
    freq: dict[str, int] = {}
    degree: dict[str, int] = {}
    for phrase in phrases:
        for word in phrase:
            freq[word] = freq.get(word, 0) + 1
            degree[word] = degree.get(word, 0) + len(phrase)
    word_score = {w: degree[w] / freq[w] for w in freq}
    scored = [(phrase, sum(word_score[w] for w in phrase)) for phrase in phrases]
    scored.sort(key=lambda pair: -pair[1])
    seen: set[tuple[str, ...]] = set()
    out = []
    for phrase, score in scored:
        if phrase in seen:
            continue
        seen.add(phrase)
        out.append((phrase, score))
    return out


def rake_query(claim_text: str, stopwords: frozenset[str] | None = None) -> frozenset[str]:
    """The top RAKE phrase truncated to five tokens, as a query term set."""
    ranked = rake_keywords(claim_text, stopwords)
    if not ranked:
        return frozenset()
    return frozenset(ranked[0][0][:5])


# --- embedding rank --------------------------------------------------------------

def embed_rank_keywords(claim_text: str, candidates, encoder) -> list[tuple[object, float]]:
    """Order candidate queries by cosine(candidate text, claim text)."""
    claim_vec = encoder.encode(claim_text)
    scored = [
        (cand, cosine(encoder.encode(" ".join(cand.sorted_terms())), claim_vec))
        for cand in candidates
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0].sorted_terms()))
    return scored


# --- threshold methods ------------------------------------------------------------

def precision_recall_f1(retrieved: frozenset[str], relevant: frozenset[str]) -> tuple[float, float, float]:
    hit = len(retrieved & relevant)
    precision = hit / len(retrieved) if retrieved else 0.0
    recall = hit / len(relevant) if relevant else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _eligible_ordinals(corpus: Corpus) -> list[int]:
    return [
        i for i, t in enumerate(corpus.tweets) if not t.is_retweet and not t.is_quote
    ]


def threshold_retrieve(
    method: str,
    claim_text: str,
    claim_id: str,
    corpus: Corpus,
    encoder,
    ground_truth: frozenset[str],
    thresholds=THRESHOLD_SWEEP,
) -> MethodResult:
    """Sweep thresholds for bm25/semantic and keep the best-F1 cut.

    Semantic scores are claim-tweet cosines; BM25 scores are min-max
    normalized into [0, 1] per claim. F1 ties resolve to the highest
    threshold (the smallest review set).
    """
    if method not in ("bm25", "semantic"):
        raise ValueError(f"threshold_retrieve does not handle {method!r}")
    if not ground_truth:
        raise ValueError("threshold sweep needs a non-empty ground-truth set")
    ordinals = _eligible_ordinals(corpus)
    ids = [corpus.tweets[i].id for i in ordinals]
    if method == "semantic":
        claim_vec = encoder.encode(claim_text)
        scores = np.array(
            [cosine(encoder.encode(corpus.tweets[i].text), claim_vec) for i in ordinals]
        )
    else:
        terms = normalize(claim_text, corpus.stopwords).term_set()
        scores = np.array([bm25_score(corpus, i, terms) for i in ordinals])
        top = scores.max() if len(scores) else 0.0
        low = scores.min() if len(scores) else 0.0
        scores = (scores - low) / (top - low) if top > low else np.zeros_like(scores)
    best = None
    for t in thresholds:
        retrieved = frozenset(tid for tid, s in zip(ids, scores) if s >= t)
        _, _, f1 = precision_recall_f1(retrieved, ground_truth)
        if best is None or f1 >= best[0]:
            best = (f1, t, retrieved)
    return MethodResult(method=method, claim_id=claim_id, retrieved=best[2], threshold_used=best[1])


# --- full comparison ---------------------------------------------------------------

def compare_methods(
    claims_with_truth: list[tuple[object, frozenset[str]]],
    corpus: Corpus,
    encoder,
    model,
    k: int = 20,
) -> ComparisonReport:
    """Per-claim P/R/F1 for every method plus retrieved-size reduction factors.

    ``claims_with_truth`` pairs ClaimRecords with their relevant tweet-id
    sets. The LTR column needs a trained RankingModel; claims it cannot
    resolve count as empty retrievals.
    """
    from .pipeline import PipelineError, derive_keywords
    from .textquery import generate_candidates

    report = ComparisonReport()
    retrieved_sizes: dict[str, list[int]] = {m: [] for m in METHODS}
    for claim, relevant in claims_with_truth:
        results: list[MethodResult] = []

        try:
            best = derive_keywords(claim, model, corpus, encoder, k=k)
            ltr_ids = frozenset(t.id for t in search_all_terms(corpus, best.terms))
        except PipelineError:
            ltr_ids = frozenset()
        results.append(MethodResult("ltr", claim.claim_id, ltr_ids))

        rake_terms = rake_query(claim.text, corpus.stopwords)
        rake_ids = (
            frozenset(t.id for t in search_all_terms(corpus, rake_terms))
            if rake_terms
            else frozenset()
        )
        results.append(MethodResult("rake", claim.claim_id, rake_ids))

        tokens = normalize(claim.text, corpus.stopwords)
        candidates = generate_candidates(claim.claim_id, tokens)
        if candidates:
            top_cand = embed_rank_keywords(claim.text, candidates, encoder)[0][0]
            er_ids = frozenset(t.id for t in search_all_terms(corpus, top_cand.terms))
        else:
            er_ids = frozenset()
        results.append(MethodResult("embed_rank", claim.claim_id, er_ids))

        for method in ("bm25", "semantic"):
            results.append(
                threshold_retrieve(method, claim.text, claim.claim_id, corpus, encoder, relevant)
            )

        for res in results:
            precision, recall, f1 = precision_recall_f1(res.retrieved, relevant)
            report.rows.append(
                ComparisonRow(
                    claim_id=res.claim_id,
                    method=res.method,
                    precision=precision,
                    recall=recall,
                    f1=f1,
                    retrieved_count=len(res.retrieved),
                    threshold=res.threshold_used,
                )
            )
            retrieved_sizes[res.method].append(len(res.retrieved))

    ltr_sizes = retrieved_sizes["ltr"]
    for method in METHODS:
        if method == "ltr":
            continue
        ratios = [
            other / ltr
            for other, ltr in zip(retrieved_sizes[method], ltr_sizes)
            if ltr > 0
        ]
        report.reduction_factors[method] = float(np.mean(ratios)) if ratios else 0.0
    return report


def write_comparison(report: ComparisonReport, out_dir: str) -> list[str]:
    """Emit comparison.csv, the F1 CDF table, and an F1 CDF figure."""
    import csv
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    paths = []

    table = os.path.join(out_dir, "comparison.csv")
    with open(table, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["claim_id", "method", "precision", "recall", "f1", "retrieved_count", "threshold"]
        )
        for row in report.rows:
            writer.writerow(
                [
                    row.claim_id,
                    row.method,
                    f"{row.precision:.6f}",
                    f"{row.recall:.6f}",
                    f"{row.f1:.6f}",
                    row.retrieved_count,
                    "" if row.threshold is None else f"{row.threshold:.1f}",
                ]
            )
    paths.append(table)

    cdf_path = os.path.join(out_dir, "f1_cdf.csv")
    with open(cdf_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "f1", "fraction_of_claims"])
        for method in METHODS:
            for f1, frac in report.f1_cdf(method):
                writer.writerow([method, f"{f1:.6f}", f"{frac:.6f}"])
    paths.append(cdf_path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for method in METHODS:
        points = report.f1_cdf(method)
        if not points:
            continue
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.step([0.0] + xs + [1.0], [0.0] + ys + [ys[-1]], where="post", label=method)
    ax.set_xlabel("F1 score")
    ax.set_ylabel("fraction of claims")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig_path = os.path.join(out_dir, "f1_cdf.png")
    fig.savefig(fig_path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    paths.append(fig_path)
    return paths
