"""Claim extraction: propositions, check-worthiness scoring, threshold filter.

The two NLP models involved (a proposition extractor and a check-worthiness
scorer) live behind provider interfaces. Remote providers speak
JSON-over-HTTP (``POST /extract {text}`` and ``POST /score {text}``);
bundled fallbacks are deterministic heuristics so the whole pipeline runs
offline. The fallbacks are explicitly NOT faithful reproductions of the
models they stand in for.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .corpus import Tweet
from .textquery import normalize, split_sentences

__all__ = [
    "Proposition",
    "ClaimRecord",
    "ScoreThreshold",
    "RocPoint",
    "RocSummary",
    "ProviderError",
    "PropositionProvider",
    "FallbackPropositionProvider",
    "RemotePropositionProvider",
    "ClaimScorer",
    "FallbackClaimScorer",
    "RemoteClaimScorer",
    "DEFAULT_THRESHOLD",
    "extract_propositions",
    "score_checkworthiness",
    "filter_claims",
    "calibrate_threshold",
    "extract_claims",
]

# Operating point shipped as the default for the claim filter.
DEFAULT_THRESHOLD_VALUE = 0.490


class ProviderError(Exception):
    """A remote provider call failed; carries the tweet id when known."""

    def __init__(self, message: str, tweet_id: str | None = None):
        super().__init__(message)
        self.tweet_id = tweet_id


@dataclass(frozen=True)
class Proposition:
    """A declarative span extracted from one sentence of a tweet."""

    tweet_id: str
    text: str
    sentence_index: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("proposition text must be non-empty")


@dataclass(frozen=True)
class ClaimRecord:
    """A check-worthy claim kept by the threshold filter."""

    claim_id: str
    text: str
    source_tweet_ids: tuple[str, ...]
    score: float


@dataclass(frozen=True)
class ScoreThreshold:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"threshold must lie in [0,1], got {self.value}")


DEFAULT_THRESHOLD = ScoreThreshold(DEFAULT_THRESHOLD_VALUE)


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


@dataclass
class RocSummary:
    points: list[RocPoint] = field(default_factory=list)
    auc: float = 0.0


def claim_id_for(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


# --- proposition providers -------------------------------------------------

class PropositionProvider:
    def extract(self, sentence: str) -> list[str]:
        raise NotImplementedError


_AUX_VERBS = frozenset(
    """am is are was were be been being has have had do does did will would
    shall should can could may might must""".split()
)

# Frequent verbs (base forms plus irregular pasts); 3rd-person -s and
# regular -ed forms are matched by suffix. Intentionally excludes domain
# noun/verb homographs (vote, ballot).
_VERB_LEXICON = frozenset(
    """say show make take get give find tell ask seem feel leave call need use
    want mean keep let begin help start run move turn bring happen provide
    lose add change follow stop create speak read allow lead grow open win
    offer appear serve send expect build stay fall cut reach remain go come
    know think see look write stand hear include continue set learn catch
    throw dump shred submit apply ease exclude increase decrease delay count
    cast flip steal rig switch receive arrive destroy deny erase claim report
    reveal prove contain hold
    said told made took gave got went came knew thought saw wrote stood heard
    held kept began ran lost won led grew fell caught threw sent built left
    meant spoke brought bought sought taught fought felt drew chose froze rose
    drove broke stole wore flew put found""".split()
)

_CLAUSE_SPLIT_RE = re.compile(
    r",?\s+(?:and|but|or|nor|which|who|whom|that|because|while|whereas|although)\s+|;\s+"
)


def _is_verbish(token: str) -> bool:
    t = token.lower().strip(".,;:!?\"'")
    if t in _AUX_VERBS or t in _VERB_LEXICON:
        return True
    if len(t) >= 4 and t.endswith("ed"):
        return True
    if t.endswith("s") and t[:-1] in _VERB_LEXICON:
        return True
    return False


class FallbackPropositionProvider(PropositionProvider):
    """Clause-splitting heuristic standing in for a sequence-tagging model.

    Splits on coordinating conjunctions and relative-clause markers, carries
    the main clause's subject onto verb-initial clauses, and emits clauses
    showing a subject-verb shape. Good enough to exercise the pipeline; not
    a linguistics result.
    """

    max_subject_tokens = 4

    def extract(self, sentence: str) -> list[str]:
        sentence = sentence.strip()
        if not sentence or sentence.endswith("?"):
            return []
        clauses = [c.strip(" ,;.!") for c in _CLAUSE_SPLIT_RE.split(sentence)]
        clauses = [c for c in clauses if c]
        if not clauses:
            return []
        subject = self._subject_span(clauses[0])
        out = []
        for clause in clauses:
            words = clause.split()
            if words and _is_verbish(words[0]) and subject:
                clause = subject + " " + clause
                words = clause.split()
            if len(words) >= 2 and any(_is_verbish(w) for w in words[1:]):
                out.append(clause)
        return out

    def _subject_span(self, clause: str) -> str:
        words = clause.split()
        for i, word in enumerate(words):
            if i > 0 and _is_verbish(word):
                return " ".join(words[: min(i, self.max_subject_tokens)])
        return " ".join(words[: min(2, len(words))])


class RemotePropositionProvider(PropositionProvider):
    def __init__(self, url: str, timeout: float = 30.0, client=None):
        self.url = url.rstrip("/")
        if client is None:
            import httpx

            client = httpx.Client(timeout=timeout)
        self._client = client

    def extract(self, sentence: str) -> list[str]:
        try:
            resp = self._client.post(self.url + "/extract", json={"text": sentence})
            resp.raise_for_status()
            props = resp.json()["propositions"]
        except Exception as exc:
            raise ProviderError(f"proposition provider failed: {exc}") from exc
        return [str(p) for p in props]


# --- check-worthiness scorers ----------------------------------------------

class ClaimScorer:
    def score(self, text: str) -> float:
        raise NotImplementedError


_ASSERTIVE_TOKENS = frozenset(
    """said shows shown showed revealed found proven proved reported confirmed
    claimed stated announced recorded counted cast flipped switched stole
    stolen rigged destroyed erased lost received submitted filed exceeded
    steal""".split()
)


class FallbackClaimScorer(ClaimScorer):
    """Transparent number/keyword-density heuristic, for offline use only.

    score = min(1, 0.15 + 0.18*min(#numeric,3) + 0.08*min(#assertive,2)
                   + 0.01*min(#tokens,15))

    Texts containing a marker token score exactly the marker's value, which
    gives tests a documented fixed point.
    """

    DEFAULT_MARKERS = {"cwmarkerhigh": 0.93, "cwmarkerlow": 0.07}

    def __init__(self, marker_scores: dict[str, float] | None = None):
        self.marker_scores = dict(self.DEFAULT_MARKERS if marker_scores is None else marker_scores)

    def score(self, text: str) -> float:
        if not text.strip():
            raise ValueError("cannot score empty text")
        tokens = normalize(text).tokens
        for marker in sorted(self.marker_scores):
            if marker in tokens:
                return self.marker_scores[marker]
        n_numeric = sum(1 for t in tokens if any(ch.isdigit() for ch in t))
        n_assertive = sum(1 for t in tokens if t in _ASSERTIVE_TOKENS)
        raw = 0.15 + 0.18 * min(n_numeric, 3) + 0.08 * min(n_assertive, 2) + 0.01 * min(len(tokens), 15)
        return min(1.0, raw)


class RemoteClaimScorer(ClaimScorer):
    def __init__(self, url: str, timeout: float = 30.0, client=None):
        self.url = url.rstrip("/")
        if client is None:
            import httpx

            client = httpx.Client(timeout=timeout)
        self._client = client

    def score(self, text: str) -> float:
        try:
            resp = self._client.post(self.url + "/score", json={"text": text})
            resp.raise_for_status()
            value = float(resp.json()["score"])
        except ProviderError:
            raise
        except Exception as exc:
            raise ProviderError(f"claim scorer failed: {exc}") from exc
        if not 0.0 <= value <= 1.0:
            raise ProviderError(f"claim scorer returned {value}, outside [0,1]")
        return value


# --- operations --------------------------------------------------------------

def extract_propositions(tweet: Tweet, provider: PropositionProvider) -> list[Proposition]:
    """Run every sentence of the tweet through the provider independently."""
    out = []
    for idx, sentence in enumerate(split_sentences(tweet.text)):
        try:
            texts = provider.extract(sentence)
        except ProviderError as exc:
            raise ProviderError(str(exc), tweet_id=tweet.id) from exc
        for text in texts:
            if text.strip():
                out.append(Proposition(tweet_id=tweet.id, text=text.strip(), sentence_index=idx))
    return out


def score_checkworthiness(text: str, scorer: ClaimScorer) -> float:
    """Score how check-worthy a text is; the score is never fabricated."""
    if not text.strip():
        raise ValueError("cannot score empty text")
    return scorer.score(text)


def filter_claims(
    scored: list[tuple[Proposition, float]],
    threshold: ScoreThreshold = DEFAULT_THRESHOLD,
) -> list[ClaimRecord]:
    """Keep propositions scoring >= threshold (inclusive) as ClaimRecords.

    Propositions whose normalized token sets coincide collapse into one
    claim, merging source tweets and keeping the best score.
    """
    kept: dict[frozenset[str], dict] = {}
    order: list[frozenset[str]] = []
    for prop, score in scored:
        if score < threshold.value:
            continue
        key = normalize(prop.text).term_set()
        entry = kept.get(key)
        if entry is None:
            kept[key] = {"text": prop.text, "score": score, "sources": {prop.tweet_id}}
            order.append(key)
        else:
            entry["sources"].add(prop.tweet_id)
            if score > entry["score"]:
                entry["score"] = score
                entry["text"] = prop.text
    return [
        ClaimRecord(
            claim_id=claim_id_for(kept[key]["text"]),
            text=kept[key]["text"],
            source_tweet_ids=tuple(sorted(kept[key]["sources"])),
            score=kept[key]["score"],
        )
        for key in order
    ]


def calibrate_threshold(labeled: list[tuple[float, bool]]) -> tuple[ScoreThreshold, RocSummary]:
    """Pick the score cut maximizing TPR - FPR (Youden's J) from labeled data.

    ``labeled`` pairs a score with whether the text really is a claim. The
    summary lists (threshold, TPR, FPR) at every distinct cut plus the
    trapezoidal AUC. Ties on J resolve to the highest threshold.
    """
    pos = sorted((s for s, is_claim in labeled if is_claim), reverse=True)
    neg = sorted((s for s, is_claim in labeled if not is_claim), reverse=True)
    if not pos or not neg:
        raise ValueError("calibration needs both claim and non-claim examples")
    thresholds = sorted({s for s, _ in labeled}, reverse=True)
    points = []
    best: RocPoint | None = None
    for t in thresholds:
        tpr = sum(1 for s in pos if s >= t) / len(pos)
        fpr = sum(1 for s in neg if s >= t) / len(neg)
        point = RocPoint(threshold=t, tpr=tpr, fpr=fpr)
        points.append(point)
        if best is None or point.tpr - point.fpr > best.tpr - best.fpr:
            best = point
    # AUC over the ROC polyline anchored at (0,0) and (1,1).
    xs = [0.0] + [p.fpr for p in reversed(points)] + [1.0]
    ys = [0.0] + [p.tpr for p in reversed(points)] + [1.0]
    auc = sum((xs[i + 1] - xs[i]) * (ys[i + 1] + ys[i]) / 2.0 for i in range(len(xs) - 1))
    return ScoreThreshold(best.threshold), RocSummary(points=points, auc=auc)


def extract_claims(
    tweets: list[Tweet],
    provider: PropositionProvider,
    scorer: ClaimScorer,
    threshold: ScoreThreshold = DEFAULT_THRESHOLD,
) -> list[ClaimRecord]:
    """Seed tweets -> sentences -> propositions -> scores -> filtered claims."""
    scored = []
    for tweet in tweets:
        for prop in extract_propositions(tweet, provider):
            scored.append((prop, score_checkworthiness(prop.text, scorer)))
    return filter_claims(scored, threshold)
