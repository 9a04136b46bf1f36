"""Retrieval-driven features for (claim, candidate query) pairs.

Eleven features per pair, in a fixed, versioned order: hit count, pairwise
similarity over the timeline sample of the results, result-to-claim
similarity, per-term query-to-claim similarity, TextRank centrality of the
query terms within the claim, and TF-IDF of the query terms (term frequency
from the claim, document frequency from the data store). Similarities are
cosines with negatives clamped to zero, so every similarity feature lives
in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from statistics import fmean, median

from .corpus import Corpus, search_all_terms, spanning_subset
from .embedding import cosine
from .textquery import CandidateQuery, NormalizedText

__all__ = [
    "FeatureVector",
    "FEATURE_NAMES",
    "FEATURE_VERSION",
    "textrank_scores",
    "idf",
    "tfidf_scores",
    "compute_features",
    "compute_feature_matrix",
    "export_features_csv",
]

FEATURE_NAMES = (
    "hits",
    "pairwise_sim_mean",
    "pairwise_sim_median",
    "result_claim_sim_mean",
    "result_claim_sim_median",
    "query_claim_sim_mean",
    "query_claim_sim_median",
    "textrank_mean",
    "textrank_median",
    "tfidf_mean",
    "tfidf_median",
)

FEATURE_VERSION = "fv1"


@dataclass(frozen=True)
class FeatureVector:
    hits: int
    pairwise_sim_mean: float
    pairwise_sim_median: float
    result_claim_sim_mean: float
    result_claim_sim_median: float
    query_claim_sim_mean: float
    query_claim_sim_median: float
    textrank_mean: float
    textrank_median: float
    tfidf_mean: float
    tfidf_median: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in FEATURE_NAMES)

    def __post_init__(self):
        values = self.as_tuple()
        if any(v != v or v in (float("inf"), float("-inf")) for v in values):
            raise ValueError("feature vector contains non-finite values")
        if self.hits < 0:
            raise ValueError("hits must be >= 0")


def _clamped_cos(u, v) -> float:
    return max(0.0, cosine(u, v))


def _mean_median(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    return float(fmean(values)), float(median(values))


def textrank_scores(claim: NormalizedText, damping: float = 0.85) -> dict[str, float]:
    """Term centrality over the claim's co-occurrence graph (window 2).

    Power iteration with the classic (1-d) + d*sum(...) update; dangling
    nodes spread their mass uniformly, so converged scores sum to the number
    of distinct terms. Stops at max delta < 1e-6 or 100 iterations.
    """
    tokens = claim.tokens
    if not tokens:
        raise ValueError("textrank needs at least one token")
    nodes = sorted(set(tokens))
    pos = {t: i for i, t in enumerate(nodes)}
    n = len(nodes)
    weights = [[0.0] * n for _ in range(n)]
    for a, b in zip(tokens, tokens[1:]):
        if a == b:
            continue
        i, j = pos[a], pos[b]
        weights[i][j] += 1.0
        weights[j][i] += 1.0
    out_weight = [sum(row) for row in weights]
    scores = [1.0] * n
    for _ in range(100):
        dangling = sum(scores[j] for j in range(n) if out_weight[j] == 0.0) / n
        nxt = []
        for i in range(n):
            inflow = sum(
                weights[j][i] / out_weight[j] * scores[j]
                for j in range(n)
                if weights[j][i] > 0.0
            )
            nxt.append((1.0 - damping) + damping * (inflow + dangling))
        delta = max(abs(a - b) for a, b in zip(nxt, scores))
        scores = nxt
        if delta < 1e-6:
            break
    return {t: scores[pos[t]] for t in nodes}


def idf(corpus: Corpus, term: str) -> float:
    """Smoothed inverse document frequency: ln((N+1)/(df+1)) + 1."""
    import math

    n = corpus.index.doc_count
    df = corpus.index.doc_freq.get(term, 0)
    return math.log((n + 1) / (df + 1)) + 1.0


def tfidf_scores(
    claim: NormalizedText, corpus: Corpus, terms=None
) -> dict[str, float]:
    """TF-IDF per term: tf counted inside the claim, idf from the store."""
    counts: dict[str, int] = {}
    for tok in claim.tokens:
        counts[tok] = counts.get(tok, 0) + 1
    wanted = counts.keys() if terms is None else terms
    return {t: counts.get(t, 0) * idf(corpus, t) for t in wanted}


def compute_features(
    claim_text: str,
    claim_tokens: NormalizedText,
    candidate: CandidateQuery,
    corpus: Corpus,
    encoder,
    results=None,
    _textrank: dict[str, float] | None = None,
    _tfidf: dict[str, float] | None = None,
) -> FeatureVector:
    """The 11-feature vector for one (claim, candidate) pair.

    ``encoder`` is any object with ``encode(text) -> vector`` (an
    EmbeddingCache is the economical choice). ``results`` may carry
    pre-fetched retrieval output for the candidate. Zero-hit candidates get
    all retrieval-dependent similarities zeroed; the query/claim, TextRank,
    and TF-IDF features are always computed.
    """
    if results is None:
        results = search_all_terms(corpus, candidate.terms)
    hits = len(results)
    claim_vec = encoder.encode(claim_text)

    if hits:
        members = spanning_subset(results).members()
        member_vecs = [encoder.encode(t.text) for t in members]
        pairwise = [_clamped_cos(u, v) for u, v in combinations(member_vecs, 2)]
        result_claim = [_clamped_cos(v, claim_vec) for v in member_vecs]
    else:
        pairwise = []
        result_claim = []
    pair_mean, pair_median = _mean_median(pairwise)
    rc_mean, rc_median = _mean_median(result_claim)

    terms = candidate.sorted_terms()
    query_claim = [_clamped_cos(encoder.encode(t), claim_vec) for t in terms]
    qc_mean, qc_median = _mean_median(query_claim)

    tr = _textrank if _textrank is not None else textrank_scores(claim_tokens)
    tr_mean, tr_median = _mean_median([tr.get(t, 0.0) for t in terms])
    tf = _tfidf if _tfidf is not None else tfidf_scores(claim_tokens, corpus)
    tf_mean, tf_median = _mean_median([tf.get(t, 0.0) for t in terms])

    return FeatureVector(
        hits=hits,
        pairwise_sim_mean=pair_mean,
        pairwise_sim_median=pair_median,
        result_claim_sim_mean=rc_mean,
        result_claim_sim_median=rc_median,
        query_claim_sim_mean=qc_mean,
        query_claim_sim_median=qc_median,
        textrank_mean=tr_mean,
        textrank_median=tr_median,
        tfidf_mean=tf_mean,
        tfidf_median=tf_median,
    )


def compute_feature_matrix(
    claim_text: str,
    claim_tokens: NormalizedText,
    candidates: list[CandidateQuery],
    corpus: Corpus,
    encoder,
    results_by_candidate: dict[CandidateQuery, list] | None = None,
) -> dict[CandidateQuery, FeatureVector]:
    """Features for every candidate of one claim, sharing per-claim work."""
    tr = textrank_scores(claim_tokens) if claim_tokens.tokens else {}
    tf = tfidf_scores(claim_tokens, corpus)
    out = {}
    for cand in candidates:
        results = None if results_by_candidate is None else results_by_candidate.get(cand)
        out[cand] = compute_features(
            claim_text, claim_tokens, cand, corpus, encoder,
            results=results, _textrank=tr, _tfidf=tf,
        )
    return out


def export_features_csv(rows, path: str, include_meta: bool = False) -> None:
    """Write feature vectors as CSV with the fixed 11-column header.

    ``rows`` yields (claim_id, candidate, FeatureVector). With
    ``include_meta`` the claim id and sorted candidate terms are prepended
    as extra columns for human inspection.
    """
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(FEATURE_NAMES)
        if include_meta:
            header = ["claim_id", "terms"] + header
        writer.writerow(header)
        for claim_id, candidate, fv in rows:
            row = [repr(v) if isinstance(v, float) else str(v) for v in fv.as_tuple()]
            if include_meta:
                row = [claim_id, " ".join(candidate.sorted_terms())] + row
            writer.writerow(row)
