"""Text normalization and candidate keyword-query generation.

Everything here is deterministic and pure: a fixed bundled stopword list
(overridable by file), a tweet-tolerant tokenizer that keeps numbers and
intra-word hyphens, contiguous n-gram candidate generation, and token-set
Jaccard similarity.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from importlib import resources

__all__ = [
    "NormalizedText",
    "CandidateQuery",
    "load_stopwords",
    "default_stopwords",
    "split_sentences",
    "normalize",
    "generate_candidates",
    "jaccard_similarity",
    "strip_suffixes",
]

# Tokens are lowercase alphanumeric runs glued by internal hyphens,
# apostrophes, or periods ("mail-in", "p.m", "don't"). Edge punctuation
# never survives.
_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-.'][a-z0-9]+)*")
_URL_RE = re.compile(r"https?://\S+|\bt\.co/\S+", re.IGNORECASE)

_STOPWORDS_CACHE: frozenset[str] | None = None


def load_stopwords(path: str) -> frozenset[str]:
    """Load a stopword list from a UTF-8 file, one token per line."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


def default_stopwords() -> frozenset[str]:
    """The bundled English stopword list (~180 words)."""
    global _STOPWORDS_CACHE
    if _STOPWORDS_CACHE is None:
        text = resources.files("lambretta.data").joinpath("stopwords_en.txt").read_text("utf-8")
        _STOPWORDS_CACHE = frozenset(line.strip().lower() for line in text.splitlines() if line.strip())
    return _STOPWORDS_CACHE


@dataclass(frozen=True)
class NormalizedText:
    """Stopword-free, lowercased token sequence of one piece of text."""

    tokens: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def term_set(self) -> frozenset[str]:
        return frozenset(self.tokens)


@dataclass(frozen=True)
class CandidateQuery:
    """An unordered 2-5 term keyword set proposed for one claim."""

    claim_id: str
    terms: frozenset[str]
    origin: str = "ngram"  # "ngram" | "annotated"

    def __post_init__(self):
        if not 2 <= len(self.terms) <= 5:
            raise ValueError(f"candidate needs 2-5 terms, got {len(self.terms)}")

    def sorted_terms(self) -> tuple[str, ...]:
        return tuple(sorted(self.terms))


# Sentence splitting: a [.!?] run ends a sentence only when the preceding
# token is not an abbreviation/initial and the next word starts a new
# sentence (capital, digit, or opening quote).
_ABBREVIATIONS = frozenset(
    """mr mrs ms dr prof sen rep gov gen col sgt lt st mt ft no vs etc inc jr sr
    dept est approx ave blvd jan feb mar apr jun jul aug sep sept oct nov dec
    a.m p.m u.s u.k d.c e.g i.e""".split()
)
_BOUNDARY_RE = re.compile(r"[.!?]+")
_OPENERS = "\"'“‘([%"

# words that, capitalized after an abbreviation, almost always start a new
# sentence ("left at 11 P.M. It returned ...")
_SENTENCE_STARTERS = frozenset(
    "the it they he she we i you a an this that these those there here then".split()
)


def _is_abbreviation(prefix: str) -> bool:
    m = re.search(r"[A-Za-z][\w.'-]*$", prefix)
    if not m:
        return False
    word = m.group(0).lower().rstrip(".")
    if word in _ABBREVIATIONS:
        return True
    # single-letter initials ("J." / the trailing "M" of "P.M")
    return len(word.rsplit(".", 1)[-1]) == 1


def split_sentences(text: str) -> list[str]:
    """Split text into sentences on terminal punctuation.

    Abbreviations, initials, and boundaries followed by a lowercase word do
    not split, so "at 8 P.M. on Tuesday" stays whole.
    """
    if not text or not text.strip():
        return []
    sentences = []
    start = 0
    for m in _BOUNDARY_RE.finditer(text):
        end = m.end()
        if end < len(text) and not text[end].isspace():
            continue  # decimal points and glued punctuation never split
        rest = text[end:].lstrip()
        if not rest:
            break
        nxt = rest[0]
        if nxt in _OPENERS and len(rest) > 1:
            nxt = rest[1]
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        if "." in m.group(0) and _is_abbreviation(text[start:m.start()]):
            next_word = re.match(r"[A-Za-z']+", rest)
            if not (next_word and next_word.group(0).lower() in _SENTENCE_STARTERS):
                continue
        piece = text[start:end].strip()
        if piece:
            sentences.append(piece)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def normalize(text: str, stopwords: frozenset[str] | None = None) -> NormalizedText:
    """Lowercase, strip URLs and punctuation, drop stopwords, keep numbers.

    Intra-word hyphens and periods survive ("mail-in", "p.m"); tokens that
    are pure punctuation never appear. Idempotent over its own output.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    cleaned = _URL_RE.sub(" ", text).lower()
    tokens = tuple(t for t in _TOKEN_RE.findall(cleaned) if t not in stopwords)
    return NormalizedText(tokens=tokens)


def generate_candidates(
    claim_id: str,
    normalized: NormalizedText,
    min_n: int = 2,
    max_n: int = 5,
) -> list[CandidateQuery]:
    """All contiguous n-grams (lengths 2-5) over the normalized tokens.

    Candidates are identified by their unordered term set, so repeated or
    reordered n-grams collapse. Result is deterministic: position order,
    duplicates dropped. Returns [] with a warning when the claim has fewer
    than two tokens.
    """
    tokens = normalized.tokens
    if len(tokens) < 2:
        warnings.warn(f"claim {claim_id!r} normalizes to fewer than 2 tokens; no candidates")
        return []
    seen: set[frozenset[str]] = set()
    out: list[CandidateQuery] = []
    for n in range(min_n, max_n + 1):
        for i in range(len(tokens) - n + 1):
            terms = frozenset(tokens[i : i + n])
            # an n-gram with repeated tokens can collapse below 2 distinct terms
            if len(terms) < 2 or terms in seen:
                continue
            seen.add(terms)
            out.append(CandidateQuery(claim_id=claim_id, terms=terms))
    return out


def jaccard_similarity(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    """|a ∩ b| / |a ∪ b|; two empty sets count as identical (1.0)."""
    if not a and not b:
        return 1.0
    union = len(a | b)
    if union == 0:
        return 1.0
    return len(a & b) / union


def strip_suffixes(token: str) -> str:
    """Cheap deterministic lemmatizer: strips plural "s", "ing", "ed".

    Stands in for a model-based tweet lemmatizer in the near-duplicate
    analysis; rules apply longest-first and only when a sensible stem
    remains.
    """
    if len(token) > 5 and token.endswith("ing"):
        return token[:-3]
    if len(token) > 4 and token.endswith("ed"):
        return token[:-2]
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token
