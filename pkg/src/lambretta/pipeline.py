"""End-to-end flow: claims -> best keyword set -> flagged moderation candidates.

For each claim the trained ranker picks the single best candidate query
(top-1); identical keyword sets across claims collapse so the corpus is
queried once per unique set. Flagged tweets become pending
ModerationCandidates for human review, and planted or annotated ground
truth supports false-negative/false-positive accounting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import Corpus, search_all_terms
from .features import compute_feature_matrix
from .ltr import RankingInstance, RankingModel, build_filtered_query_set, rank
from .textquery import CandidateQuery, generate_candidates, normalize

__all__ = [
    "CATEGORIES",
    "ModerationCandidate",
    "UniqueKeywordSet",
    "FlagResult",
    "FnReport",
    "RetentionStats",
    "PipelineError",
    "derive_keywords",
    "build_training_instances",
    "dedupe_keyword_sets",
    "flag_candidates",
    "false_negative_report",
    "false_positive_rate",
    "write_candidates",
    "read_candidates",
]

CATEGORIES = (
    "amplifying",
    "reporting",
    "counter",
    "satire",
    "discussion",
    "inquiry",
    "irrelevant",
)


class PipelineError(Exception):
    """A claim could not be resolved against the corpus."""

    def __init__(self, message: str, claim_id: str | None = None):
        super().__init__(message)
        self.claim_id = claim_id


@dataclass(frozen=True)
class ModerationCandidate:
    """A flagged tweet awaiting a human decision for one specific claim."""

    tweet_id: str
    claim_id: str
    matched_terms: frozenset[str]
    flagged_at: int
    status: str = "pending"  # pending | labeled | dismissed
    categories: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.status not in ("pending", "labeled", "dismissed"):
            raise ValueError(f"unknown status {self.status!r}")
        unknown = self.categories - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown categories {sorted(unknown)}")
        if (self.status == "labeled") != bool(self.categories):
            raise ValueError("categories must be non-empty exactly when status is 'labeled'")

    @property
    def candidate_id(self) -> str:
        return f"{self.claim_id}:{self.tweet_id}"


@dataclass(frozen=True)
class UniqueKeywordSet:
    terms: frozenset[str]
    claim_ids: tuple[str, ...]


@dataclass
class FlagResult:
    candidates: list[ModerationCandidate]
    queries_issued: int
    hits_per_set: dict[frozenset[str], int] = field(default_factory=dict)


def derive_keywords(
    claim,
    model: RankingModel,
    corpus: Corpus,
    encoder,
    k: int = 20,
) -> CandidateQuery:
    """Pick the best keyword set for one claim with the trained ranker.

    candidates -> pre-ranking filter (top-k claim-similar pool) -> features
    -> model ranking -> top-1. Deterministic for a fixed model and corpus.
    Raises PipelineError when no candidate retrieves anything, which means
    the claim cannot be resolved against this corpus.
    """
    tokens = normalize(claim.text, corpus.stopwords)
    if len(tokens) < 2:
        raise PipelineError(
            f"claim {claim.claim_id} normalizes to fewer than 2 tokens", claim.claim_id
        )
    candidates = generate_candidates(claim.claim_id, tokens)
    results_by_candidate = {c: search_all_terms(corpus, c.terms) for c in candidates}
    fqs = build_filtered_query_set(claim.text, results_by_candidate, encoder, k=k)
    if not fqs.retained:
        raise PipelineError(
            f"claim {claim.claim_id}: no candidate query retrieves any result",
            claim.claim_id,
        )
    feats = compute_feature_matrix(
        claim.text, tokens, fqs.retained, corpus, encoder, results_by_candidate
    )
    instances = [
        RankingInstance(query_id=claim.claim_id, candidate=c, features=feats[c], relevance=0)
        for c in fqs.retained
    ]
    ranked = rank(model, instances)
    return ranked[0][0].candidate


def dedupe_keyword_sets(per_claim: list[tuple[str, frozenset[str]]]) -> list[UniqueKeywordSet]:
    """Collapse identical keyword sets, keeping every contributing claim id."""
    grouped: dict[frozenset[str], set[str]] = {}
    for claim_id, terms in per_claim:
        grouped.setdefault(frozenset(terms), set()).add(claim_id)
    return [
        UniqueKeywordSet(terms=terms, claim_ids=tuple(sorted(grouped[terms])))
        for terms in sorted(grouped, key=lambda t: tuple(sorted(t)))
    ]


def flag_candidates(
    unique_sets: list[UniqueKeywordSet],
    corpus: Corpus,
    flagged_at: int | None = None,
) -> FlagResult:
    """Search the corpus once per unique keyword set and flag every match.

    A tweet matching the keyword sets of several claims yields one pending
    candidate per claim. ``flagged_at`` defaults to the newest corpus
    timestamp so exports stay byte-identical across runs.
    """
    if flagged_at is None:
        flagged_at = max((t.created_at for t in corpus.tweets), default=0)
    seen: set[tuple[str, str]] = set()
    candidates: list[ModerationCandidate] = []
    hits_per_set: dict[frozenset[str], int] = {}
    queries = 0
    for uks in unique_sets:
        hits = search_all_terms(corpus, uks.terms)
        queries += 1
        hits_per_set[uks.terms] = len(hits)
        for tweet in hits:
            for claim_id in uks.claim_ids:
                key = (tweet.id, claim_id)
                if key in seen:
                    continue
                seen.add(key)
                candidates.append(
                    ModerationCandidate(
                        tweet_id=tweet.id,
                        claim_id=claim_id,
                        matched_terms=uks.terms,
                        flagged_at=flagged_at,
                    )
                )
    candidates.sort(key=lambda c: (c.claim_id, c.tweet_id))
    return FlagResult(candidates=candidates, queries_issued=queries, hits_per_set=hits_per_set)


@dataclass
class RetentionStats:
    claim_id: str
    n_candidates: int
    n_retained: int
    positive_retained: bool


def build_training_instances(
    annotated: list[tuple[object, frozenset[str]]],
    corpus: Corpus,
    encoder,
    k: int = 20,
) -> tuple[list[RankingInstance], list[RetentionStats]]:
    """Materialize ranking instances from (claim, positive term set) labels.

    Candidates run through the same pre-ranking filter used at inference;
    the retained candidate equal to the annotated positive gets relevance 1,
    everything else 0. Retention stats expose how hard the filter pruned
    and whether it kept the positive.
    """
    instances: list[RankingInstance] = []
    stats: list[RetentionStats] = []
    for claim, positive in annotated:
        tokens = normalize(claim.text, corpus.stopwords)
        candidates = generate_candidates(claim.claim_id, tokens)
        results = {c: search_all_terms(corpus, c.terms) for c in candidates}
        fqs = build_filtered_query_set(claim.text, results, encoder, k=k)
        retained = fqs.retained
        stats.append(
            RetentionStats(
                claim_id=claim.claim_id,
                n_candidates=len(candidates),
                n_retained=len(retained),
                positive_retained=any(c.terms == positive for c in retained),
            )
        )
        if not retained:
            continue
        feats = compute_feature_matrix(claim.text, tokens, retained, corpus, encoder, results)
        for cand in retained:
            instances.append(
                RankingInstance(
                    query_id=claim.claim_id,
                    candidate=cand,
                    features=feats[cand],
                    relevance=1 if cand.terms == positive else 0,
                )
            )
    return instances, stats


@dataclass
class FnReport:
    per_claim: dict[str, float]
    pooled: float
    missing: dict[str, frozenset[str]]


def false_negative_report(
    flagged: list[ModerationCandidate],
    ground_truth: dict[str, frozenset[str]],
) -> FnReport:
    """FN rate |relevant - flagged| / |relevant| per claim and pooled."""
    if not ground_truth:
        raise ValueError("false-negative accounting needs ground truth")
    flagged_by_claim: dict[str, set[str]] = {}
    for cand in flagged:
        flagged_by_claim.setdefault(cand.claim_id, set()).add(cand.tweet_id)
    per_claim = {}
    missing = {}
    total_rel = 0
    total_miss = 0
    for claim_id, relevant in ground_truth.items():
        if not relevant:
            raise ValueError(f"claim {claim_id}: empty ground-truth set")
        got = flagged_by_claim.get(claim_id, set())
        miss = frozenset(relevant - got)
        per_claim[claim_id] = len(miss) / len(relevant)
        missing[claim_id] = miss
        total_rel += len(relevant)
        total_miss += len(miss)
    return FnReport(per_claim=per_claim, pooled=total_miss / total_rel, missing=missing)


def false_positive_rate(
    flagged: list[ModerationCandidate],
    ground_truth: dict[str, frozenset[str]],
) -> float:
    """Fraction of flagged candidates not relevant to their claim."""
    if not flagged:
        return 0.0
    bad = sum(
        1
        for cand in flagged
        if cand.tweet_id not in ground_truth.get(cand.claim_id, frozenset())
    )
    return bad / len(flagged)


def candidate_to_record(cand: ModerationCandidate) -> dict:
    return {
        "tweet_id": cand.tweet_id,
        "claim_id": cand.claim_id,
        "matched_terms": sorted(cand.matched_terms),
        "flagged_at": cand.flagged_at,
        "status": cand.status,
        "categories": sorted(cand.categories),
    }


def candidate_from_record(record: dict) -> ModerationCandidate:
    return ModerationCandidate(
        tweet_id=record["tweet_id"],
        claim_id=record["claim_id"],
        matched_terms=frozenset(record["matched_terms"]),
        flagged_at=int(record["flagged_at"]),
        status=record.get("status", "pending"),
        categories=frozenset(record.get("categories", ())),
    )


def write_candidates(candidates: list[ModerationCandidate], path: str) -> None:
    """Export candidates as newline-delimited JSON, sorted for determinism."""
    ordered = sorted(candidates, key=lambda c: (c.claim_id, c.tweet_id))
    with open(path, "w", encoding="utf-8") as fh:
        for cand in ordered:
            fh.write(json.dumps(candidate_to_record(cand), sort_keys=True) + "\n")


def read_candidates(path: str) -> list[ModerationCandidate]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(candidate_from_record(json.loads(line)))
    return out
