"""Post-flagging analyses: coverage, near-duplicate pairs, category stats.

These reproduce, at fixture scale, the moderation-coverage CDF, the
Jaccard near-duplicate consistency check, and the per-category moderation
table. ``emit_report`` writes the delimited tables plus rendered figures
into one output directory.
"""

from __future__ import annotations

import csv
import os
import re
import warnings
from dataclasses import dataclass, field

from .corpus import Corpus, Tweet
from .pipeline import CATEGORIES, ModerationCandidate
from .textquery import jaccard_similarity, normalize, strip_suffixes

__all__ = [
    "CoverageRecord",
    "PairReport",
    "CategoryRow",
    "coverage_by_claim",
    "coverage_cdf",
    "near_duplicate_pairs",
    "category_stats",
    "emit_report",
]

_MENTION_RE = re.compile(r"@\w+")


@dataclass(frozen=True)
class CoverageRecord:
    claim_id: str
    flagged_count: int
    moderated_count: int
    coverage: float | None

    def __post_init__(self):
        if self.flagged_count > 0 and self.coverage is not None:
            expected = self.moderated_count / self.flagged_count
            if abs(self.coverage - expected) > 1e-12:
                raise ValueError("coverage inconsistent with counts")


@dataclass
class PairReport:
    pairs: list[tuple[str, str, float]] = field(default_factory=list)
    both_moderated: int = 0
    one_moderated: int = 0
    neither_moderated: int = 0

    @property
    def crosstab_total(self) -> int:
        return self.both_moderated + self.one_moderated + self.neither_moderated


@dataclass(frozen=True)
class CategoryRow:
    category: str
    candidate_count: int
    moderated_count: int

    @property
    def moderated_pct(self) -> float:
        if self.candidate_count == 0:
            return 0.0
        return 100.0 * self.moderated_count / self.candidate_count


def coverage_by_claim(
    candidates: list[ModerationCandidate],
    corpus: Corpus,
    claim_ids: list[str] | None = None,
) -> list[CoverageRecord]:
    """Per-claim share of flagged tweets that carry a moderation label.

    ``claim_ids`` can force rows for claims with nothing flagged; those get
    coverage None and a warning, and stay out of the CDF.
    """
    flagged: dict[str, set[str]] = {}
    for cand in candidates:
        flagged.setdefault(cand.claim_id, set()).add(cand.tweet_id)
    ids = sorted(flagged) if claim_ids is None else list(claim_ids)
    records = []
    for claim_id in ids:
        tweets = flagged.get(claim_id, set())
        if not tweets:
            warnings.warn(f"claim {claim_id}: nothing flagged, coverage undefined")
            records.append(CoverageRecord(claim_id, 0, 0, None))
            continue
        moderated = sum(1 for tid in tweets if corpus.get(tid).is_moderated)
        records.append(
            CoverageRecord(claim_id, len(tweets), moderated, moderated / len(tweets))
        )
    return records


def coverage_cdf(records: list[CoverageRecord]) -> list[tuple[float, float]]:
    """CDF points (coverage, fraction of claims); nondecreasing, ends at 1.0."""
    values = sorted(r.coverage for r in records if r.coverage is not None)
    n = len(values)
    return [(v, (i + 1) / n) for i, v in enumerate(values)]


def _pair_tokens(text: str) -> frozenset[str]:
    # links and mentions out, every remaining token kept, suffix-stripped
    cleaned = _MENTION_RE.sub(" ", text)
    tokens = normalize(cleaned, stopwords=frozenset()).tokens
    return frozenset(strip_suffixes(t) for t in tokens)


def near_duplicate_pairs(
    candidates: list[ModerationCandidate],
    corpus: Corpus,
    lo: float = 0.75,
    hi: float = 0.9,
) -> PairReport:
    """Tweet pairs with token-set Jaccard in [lo, hi), cross-tabbed by label.

    Retweets never participate. A length band (|a|/|b| >= lo is necessary
    for J >= lo) prunes the quadratic scan before exact Jaccard runs.
    """
    tweets: dict[str, Tweet] = {}
    for cand in candidates:
        tweet = corpus.get(cand.tweet_id)
        if tweet.is_retweet or tweet.is_quote:
            continue
        tweets[tweet.id] = tweet
    items = sorted(
        ((tid, _pair_tokens(t.text)) for tid, t in tweets.items()),
        key=lambda pair: (len(pair[1]), pair[0]),
    )
    report = PairReport()
    for i, (id_a, set_a) in enumerate(items):
        if not set_a:
            continue
        for j in range(i + 1, len(items)):
            id_b, set_b = items[j]
            if len(set_a) < lo * len(set_b):
                break  # sizes only grow from here; Jaccard can no longer reach lo
            sim = jaccard_similarity(set_a, set_b)
            if lo <= sim < hi:
                first, second = sorted((id_a, id_b))
                report.pairs.append((first, second, sim))
                n_mod = int(tweets[id_a].is_moderated) + int(tweets[id_b].is_moderated)
                if n_mod == 2:
                    report.both_moderated += 1
                elif n_mod == 1:
                    report.one_moderated += 1
                else:
                    report.neither_moderated += 1
    report.pairs.sort()
    return report


def category_stats(
    candidates: list[ModerationCandidate], corpus: Corpus
) -> list[CategoryRow]:
    """Candidate and moderated counts per review category (labeled only).

    A candidate labeled with several categories increments each of them
    once. Rows always cover all seven categories, in fixed order.
    """
    counts = {c: 0 for c in CATEGORIES}
    moderated = {c: 0 for c in CATEGORIES}
    for cand in candidates:
        if cand.status != "labeled":
            continue
        is_mod = corpus.get(cand.tweet_id).is_moderated
        for cat in cand.categories:
            counts[cat] += 1
            if is_mod:
                moderated[cat] += 1
    return [CategoryRow(c, counts[c], moderated[c]) for c in CATEGORIES]


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def emit_report(
    candidates: list[ModerationCandidate],
    corpus: Corpus,
    out_dir: str,
    claim_ids: list[str] | None = None,
) -> list[str]:
    """Run all analyses and write tables, CDF points, figures, and a summary.

    Files: coverage.csv, coverage_cdf.csv, pairs.csv, categories.csv,
    summary.txt, coverage_cdf.png, categories.png. Re-running on the same
    inputs reproduces the same bytes.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    records = coverage_by_claim(candidates, corpus, claim_ids)
    cdf = coverage_cdf(records)
    pair_report = near_duplicate_pairs(candidates, corpus)
    cat_rows = category_stats(candidates, corpus)

    paths = []

    coverage_path = os.path.join(out_dir, "coverage.csv")
    _write_csv(
        coverage_path,
        ["claim_id", "flagged_count", "moderated_count", "coverage"],
        [
            [r.claim_id, r.flagged_count, r.moderated_count,
             "" if r.coverage is None else f"{r.coverage:.6f}"]
            for r in records
        ],
    )
    paths.append(coverage_path)

    cdf_path = os.path.join(out_dir, "coverage_cdf.csv")
    _write_csv(
        cdf_path,
        ["coverage", "fraction_of_claims"],
        [[f"{x:.6f}", f"{y:.6f}"] for x, y in cdf],
    )
    paths.append(cdf_path)

    pairs_path = os.path.join(out_dir, "pairs.csv")
    _write_csv(
        pairs_path,
        ["tweet_a", "tweet_b", "jaccard", "moderated_a", "moderated_b"],
        [
            [a, b, f"{sim:.6f}", int(corpus.get(a).is_moderated), int(corpus.get(b).is_moderated)]
            for a, b, sim in pair_report.pairs
        ],
    )
    paths.append(pairs_path)

    categories_path = os.path.join(out_dir, "categories.csv")
    _write_csv(
        categories_path,
        ["category", "candidates", "moderated", "moderated_pct"],
        [
            [row.category, row.candidate_count, row.moderated_count, f"{row.moderated_pct:.2f}"]
            for row in cat_rows
        ],
    )
    paths.append(categories_path)

    flagged_tweets = {c.tweet_id for c in candidates}
    moderated_flagged = sum(1 for tid in flagged_tweets if corpus.get(tid).is_moderated)
    frac = 100.0 * moderated_flagged / len(flagged_tweets) if flagged_tweets else 0.0
    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("moderation candidate report\n")
        fh.write(f"claims analyzed: {len(records)}\n")
        fh.write(f"candidate records: {len(candidates)}\n")
        fh.write(f"distinct flagged tweets: {len(flagged_tweets)}\n")
        fh.write(f"flagged tweets already moderated: {moderated_flagged} ({frac:.2f}%)\n")
        fh.write(
            f"near-duplicate pairs: {len(pair_report.pairs)} "
            f"(both moderated: {pair_report.both_moderated}, one: {pair_report.one_moderated}, "
            f"neither: {pair_report.neither_moderated})\n"
        )
    paths.append(summary_path)

    fig, ax = plt.subplots(figsize=(6, 4))
    if cdf:
        xs = [x for x, _ in cdf]
        ys = [y for _, y in cdf]
        ax.step([0.0] + xs, [0.0] + ys, where="post")
    ax.set_xlabel("fraction of flagged tweets moderated")
    ax.set_ylabel("fraction of claims")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    fig.tight_layout()
    cdf_fig = os.path.join(out_dir, "coverage_cdf.png")
    fig.savefig(cdf_fig, dpi=120, metadata={"Software": None})
    plt.close(fig)
    paths.append(cdf_fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    names = [row.category for row in cat_rows]
    ax.bar(names, [row.candidate_count for row in cat_rows], label="candidates")
    ax.bar(names, [row.moderated_count for row in cat_rows], label="moderated")
    ax.set_ylabel("candidates")
    ax.tick_params(axis="x", rotation=45)
    ax.legend()
    fig.tight_layout()
    cat_fig = os.path.join(out_dir, "categories.png")
    fig.savefig(cat_fig, dpi=120, metadata={"Software": None})
    plt.close(fig)
    paths.append(cat_fig)

    return paths
