"""Tweet corpus: ingest, inverted index, all-terms search, BM25, sampling.

The index is immutable once built; every reader-facing function touches only
built state, so concurrent reads are safe. Ingest is single-writer.

Corpus input is newline-delimited JSON, one object per line with fields
``id, text, author_id, created_at (ISO-8601), is_retweet, is_quote,
like_count, retweet_count, moderation_label, urls``. Saved indexes are text
containers with magic header ``LAMIDX1``.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .textquery import NormalizedText, normalize

__all__ = [
    "Tweet",
    "CorpusIndex",
    "SpanningSubset",
    "IngestConfig",
    "IngestReport",
    "Corpus",
    "PersistenceError",
    "build_corpus",
    "ingest_corpus",
    "search_all_terms",
    "spanning_subset",
    "bm25_score",
    "bm25_rank",
    "save_index",
    "load_index",
]

INDEX_MAGIC = "LAMIDX1"

MODERATION_LABELS = ("none", "warning")


class PersistenceError(Exception):
    """Raised when an index or model file cannot be read back."""


@dataclass(frozen=True)
class Tweet:
    """One corpus post."""

    id: str
    text: str
    author_id: str = ""
    created_at: int = 0  # UTC seconds
    is_retweet: bool = False
    is_quote: bool = False
    like_count: int = 0
    retweet_count: int = 0
    moderation_label: str = "none"
    urls: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("tweet id must be non-empty")
        if self.like_count < 0 or self.retweet_count < 0:
            raise ValueError(f"tweet {self.id}: negative engagement count")
        if self.moderation_label not in MODERATION_LABELS:
            raise ValueError(f"tweet {self.id}: unknown moderation_label {self.moderation_label!r}")

    @property
    def is_moderated(self) -> bool:
        return self.moderation_label == "warning"


@dataclass
class CorpusIndex:
    """Inverted index over document ordinals plus BM25 statistics."""

    postings: dict[str, list[int]] = field(default_factory=dict)
    doc_count: int = 0
    doc_lengths: list[int] = field(default_factory=list)
    doc_freq: dict[str, int] = field(default_factory=dict)
    avg_doc_len: float = 0.0

    def validate(self) -> None:
        for term, plist in self.postings.items():
            if self.doc_freq.get(term) != len(plist):
                raise ValueError(f"doc_freq mismatch for {term!r}")
            if any(b <= a for a, b in zip(plist, plist[1:])):
                raise ValueError(f"postings for {term!r} not strictly ascending")
            if plist and (plist[0] < 0 or plist[-1] >= self.doc_count):
                raise ValueError(f"postings for {term!r} out of range")
        if len(self.doc_lengths) != self.doc_count:
            raise ValueError("doc_lengths does not cover every document")
        expected = (sum(self.doc_lengths) / self.doc_count) if self.doc_count else 0.0
        if abs(self.avg_doc_len - expected) > 1e-9:
            raise ValueError("avg_doc_len inconsistent with doc_lengths")

    def __eq__(self, other) -> bool:
        if not isinstance(other, CorpusIndex):
            return NotImplemented
        return (
            self.postings == other.postings
            and self.doc_count == other.doc_count
            and self.doc_lengths == other.doc_lengths
            and self.doc_freq == other.doc_freq
            and abs(self.avg_doc_len - other.avg_doc_len) <= 1e-12
        )


@dataclass
class SpanningSubset:
    """Timeline sample of a result set: oldest 20%, newest 20%, middle 10%."""

    earliest: list[Tweet] = field(default_factory=list)
    latest: list[Tweet] = field(default_factory=list)
    middle: list[Tweet] = field(default_factory=list)

    def members(self) -> list[Tweet]:
        return self.earliest + self.middle + self.latest

    def __len__(self) -> int:
        return len(self.earliest) + len(self.middle) + len(self.latest)


@dataclass
class IngestConfig:
    window_start: int | None = None  # UTC seconds, inclusive
    window_end: int | None = None  # UTC seconds, inclusive
    stopwords: frozenset[str] | None = None


@dataclass
class IngestReport:
    n_ingested: int = 0
    n_duplicates: int = 0
    n_window_skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)


class Corpus:
    """Tweet store plus its inverted index.

    Tweets keep their ingest order as document ordinals; ``term_freqs``
    carries per-document term counts for BM25 and TF-IDF.
    """

    def __init__(self, tweets: list[Tweet], stopwords: frozenset[str] | None = None):
        self.tweets: list[Tweet] = list(tweets)
        self.stopwords = stopwords
        self.by_id: dict[str, Tweet] = {}
        self.term_freqs: list[dict[str, int]] = []
        self.index = CorpusIndex()
        self._build()

    def _build(self) -> None:
        postings: dict[str, list[int]] = {}
        doc_lengths: list[int] = []
        for ordinal, tweet in enumerate(self.tweets):
            if tweet.id in self.by_id:
                raise ValueError(f"duplicate tweet id {tweet.id!r}")
            self.by_id[tweet.id] = tweet
            tokens = normalize(tweet.text, self.stopwords).tokens
            counts: dict[str, int] = {}
            for tok in tokens:
                counts[tok] = counts.get(tok, 0) + 1
            self.term_freqs.append(counts)
            doc_lengths.append(len(tokens))
            for term in counts:
                postings.setdefault(term, []).append(ordinal)
        n = len(self.tweets)
        self.index = CorpusIndex(
            postings=postings,
            doc_count=n,
            doc_lengths=doc_lengths,
            doc_freq={t: len(p) for t, p in postings.items()},
            avg_doc_len=(sum(doc_lengths) / n) if n else 0.0,
        )

    def __len__(self) -> int:
        return len(self.tweets)

    def normalize(self, text: str) -> NormalizedText:
        return normalize(text, self.stopwords)

    def get(self, tweet_id: str) -> Tweet:
        return self.by_id[tweet_id]


def _parse_created_at(value) -> int:
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, str):
        dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise ValueError(f"unparseable created_at: {value!r}")


def tweet_from_record(record: dict) -> Tweet:
    """Build a Tweet from one parsed corpus JSON object."""
    label = record.get("moderation_label") or "none"
    return Tweet(
        id=str(record["id"]),
        text=record["text"],
        author_id=str(record.get("author_id", "")),
        created_at=_parse_created_at(record["created_at"]),
        is_retweet=bool(record.get("is_retweet", False)),
        is_quote=bool(record.get("is_quote", False)),
        like_count=int(record.get("like_count", 0)),
        retweet_count=int(record.get("retweet_count", 0)),
        moderation_label=label,
        urls=tuple(record.get("urls") or ()),
    )


def tweet_to_record(tweet: Tweet) -> dict:
    return {
        "id": tweet.id,
        "text": tweet.text,
        "author_id": tweet.author_id,
        "created_at": tweet.created_at,
        "is_retweet": tweet.is_retweet,
        "is_quote": tweet.is_quote,
        "like_count": tweet.like_count,
        "retweet_count": tweet.retweet_count,
        "moderation_label": tweet.moderation_label,
        "urls": list(tweet.urls),
    }


def build_corpus(tweets: list[Tweet], stopwords: frozenset[str] | None = None) -> Corpus:
    return Corpus(tweets, stopwords=stopwords)


def ingest_corpus(path: str, config: IngestConfig | None = None) -> tuple[Corpus, IngestReport]:
    """Ingest a JSONL corpus file into a Corpus.

    Malformed records are reported with their line number and skipped;
    duplicate ids are skipped and counted. Ingest always continues.
    """
    config = config or IngestConfig()
    report = IngestReport()
    tweets: list[Tweet] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                for required in ("id", "text", "created_at"):
                    if required not in record:
                        raise ValueError(f"missing field {required!r}")
                tweet = tweet_from_record(record)
            except Exception as exc:
                report.errors.append((line_no, str(exc)))
                continue
            if tweet.id in seen:
                report.n_duplicates += 1
                continue
            if config.window_start is not None and tweet.created_at < config.window_start:
                report.n_window_skipped += 1
                continue
            if config.window_end is not None and tweet.created_at > config.window_end:
                report.n_window_skipped += 1
                continue
            seen.add(tweet.id)
            tweets.append(tweet)
    report.n_ingested = len(tweets)
    corpus = Corpus(tweets, stopwords=config.stopwords)
    corpus.index.validate()
    return corpus, report


def _intersect_sorted(lists: list[list[int]]) -> list[int]:
    """Intersect ascending postings lists, smallest first."""
    if not lists:
        return []
    lists = sorted(lists, key=len)
    result = lists[0]
    for other in lists[1:]:
        if not result:
            return []
        merged = []
        pos = 0
        for ordinal in result:
            pos = bisect_left(other, ordinal, pos)
            if pos == len(other):
                break
            if other[pos] == ordinal:
                merged.append(ordinal)
                pos += 1
        result = merged
    return result


def search_all_terms(corpus: Corpus, terms: set[str] | frozenset[str]) -> list[Tweet]:
    """All tweets containing every term, token order ignored.

    Retweets and quote tweets are excluded. Results come back in
    chronological order (created_at, then id). Unknown terms simply yield
    an empty result.
    """
    if not terms:
        raise ValueError("search_all_terms requires at least one term")
    postings = []
    for term in terms:
        plist = corpus.index.postings.get(term)
        if plist is None:
            return []
        postings.append(plist)
    hits = [
        corpus.tweets[o]
        for o in _intersect_sorted(postings)
        if not corpus.tweets[o].is_retweet and not corpus.tweets[o].is_quote
    ]
    hits.sort(key=lambda t: (t.created_at, t.id))
    return hits


def spanning_subset(results: list[Tweet]) -> SpanningSubset:
    """Sample the earliest 20%, latest 20%, and middle 10% of results.

    ``results`` must already be time-sorted. The middle slice is centered
    on the median timestamp rank. Result sets too small to carve three
    disjoint parts come back whole in ``earliest``.
    """
    n = len(results)
    if n == 0:
        return SpanningSubset()
    n_edge = math.ceil(0.2 * n)
    n_mid = math.ceil(0.1 * n)
    if 2 * n_edge + n_mid > n or n <= 4:
        return SpanningSubset(earliest=list(results))
    mid_start = (n - n_mid) // 2
    mid_start = max(n_edge, min(mid_start, n - n_edge - n_mid))
    return SpanningSubset(
        earliest=list(results[:n_edge]),
        latest=list(results[n - n_edge :]),
        middle=list(results[mid_start : mid_start + n_mid]),
    )


def _bm25_idf(corpus: Corpus, term: str) -> float:
    # Lucene variant: ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
    n = corpus.index.doc_count
    df = corpus.index.doc_freq.get(term, 0)
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_score(
    corpus: Corpus,
    ordinal: int,
    terms: set[str] | frozenset[str],
    k1: float = 1.2,
    b: float = 0.75,
) -> float:
    """BM25 score of one document against a term set; 0 iff no term matches."""
    tf_map = corpus.term_freqs[ordinal]
    dl = corpus.index.doc_lengths[ordinal]
    avgdl = corpus.index.avg_doc_len or 1.0
    score = 0.0
    for term in terms:
        tf = tf_map.get(term, 0)
        if tf == 0:
            continue
        score += _bm25_idf(corpus, term) * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl))
    return score


def bm25_rank(
    corpus: Corpus,
    terms: set[str] | frozenset[str],
    top_k: int,
    k1: float = 1.2,
    b: float = 0.75,
    include_reposts: bool = False,
) -> list[tuple[Tweet, float]]:
    """Top-k tweets by BM25 over the query terms, score-descending.

    Ties break on tweet id. Documents containing no query term are never
    returned. Retweets/quotes are excluded by default so all retrieval
    paths see the same document universe.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    candidates: set[int] = set()
    for term in terms:
        candidates.update(corpus.index.postings.get(term, ()))
    scored = []
    for ordinal in candidates:
        tweet = corpus.tweets[ordinal]
        if not include_reposts and (tweet.is_retweet or tweet.is_quote):
            continue
        score = bm25_score(corpus, ordinal, terms, k1=k1, b=b)
        if score > 0.0:
            scored.append((tweet, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored[:top_k]


def save_index(corpus: Corpus, path: str) -> None:
    """Write the corpus and its index to a LAMIDX1 container."""
    payload = {
        "version": 1,
        "stopwords": sorted(corpus.stopwords) if corpus.stopwords is not None else None,
        "tweets": [tweet_to_record(t) for t in corpus.tweets],
        "index": {
            "postings": corpus.index.postings,
            "doc_count": corpus.index.doc_count,
            "doc_lengths": corpus.index.doc_lengths,
            "doc_freq": corpus.index.doc_freq,
            "avg_doc_len": corpus.index.avg_doc_len,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(INDEX_MAGIC + "\n")
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_index(path: str) -> Corpus:
    """Load a LAMIDX1 container; any corruption fails loudly, never partially."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != INDEX_MAGIC:
            raise PersistenceError(f"{path}: expected header {INDEX_MAGIC!r}, found {header!r}")
        body = fh.read()
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"{path}: corrupt index body: {exc}") from exc
    if payload.get("version") != 1:
        raise PersistenceError(f"{path}: unsupported index version {payload.get('version')!r}")
    try:
        tweets = [tweet_from_record(r) for r in payload["tweets"]]
        stored_stops = payload.get("stopwords")
        corpus = Corpus(
            tweets,
            stopwords=frozenset(stored_stops) if stored_stops is not None else None,
        )
        stored = payload["index"]
        loaded = CorpusIndex(
            postings={t: list(p) for t, p in stored["postings"].items()},
            doc_count=stored["doc_count"],
            doc_lengths=list(stored["doc_lengths"]),
            doc_freq={t: int(v) for t, v in stored["doc_freq"].items()},
            avg_doc_len=float(stored["avg_doc_len"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"{path}: malformed index payload: {exc}") from exc
    loaded.validate()
    if loaded != corpus.index:
        raise PersistenceError(f"{path}: stored index disagrees with rebuilt index")
    return corpus
