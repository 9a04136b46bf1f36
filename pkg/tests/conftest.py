import pytest

from lambretta.claims import ClaimRecord, claim_id_for
from lambretta.corpus import Corpus, Tweet
from lambretta.embedding import EmbeddingCache, HashingEncoder


def make_tweet(tid, text, created_at=1604188800, **kwargs):
    return Tweet(id=tid, text=text, created_at=created_at, **kwargs)


@pytest.fixture
def encoder():
    return EmbeddingCache(HashingEncoder(dim=128))


@pytest.fixture
def michigan_corpus():
    """4 planted tweets matching {michigan, dead, ballot} plus 50 distractors."""
    tweets = []
    planted = [
        "Michigan officials found dead voters on the ballot rolls last night",
        "A dead man cast a ballot in Michigan according to this viral post",
        "The Michigan ballot audit flagged dead registrants in two counties",
        "Dead voter ballot claims spread across Michigan watch parties",
    ]
    for i, text in enumerate(planted):
        tweets.append(make_tweet(f"p{i}", text, created_at=1604188800 + i * 3600))
    fillers = [
        "Arizona recount continues into the weekend",
        "Georgia officials certified the audit totals",
        "Poll watchers in Nevada report long lines",
        "A viral video about suitcases was debunked",
        "Mail ballots arrived late in several counties",
        "The dead heat in Ohio kept anchors busy",
        "Michigan turnout broke a state record",
        "Ballot curing deadlines differ by state",
    ]
    for i in range(50):
        tweets.append(
            make_tweet(f"d{i}", fillers[i % len(fillers)] + f" update {i}",
                       created_at=1604275200 + i * 600)
        )
    # retweet/quote copies of a planted tweet must never come back
    tweets.append(make_tweet("rt0", planted[0], created_at=1604361600, is_retweet=True))
    tweets.append(make_tweet("qt0", planted[1], created_at=1604361601, is_quote=True))
    return Corpus(tweets)


@pytest.fixture
def claim(michigan_corpus):
    text = "Michigan dead voter ballot fraud spread in counting centers"
    return ClaimRecord(
        claim_id=claim_id_for(text), text=text, source_tweet_ids=("p0",), score=0.9
    )


def linear_scan_all_terms(corpus, terms):
    """Independent oracle: per-document scan with the same normalizer."""
    out = []
    for tweet in corpus.tweets:
        if tweet.is_retweet or tweet.is_quote:
            continue
        tokens = set(corpus.normalize(tweet.text).tokens)
        if all(t in tokens for t in terms):
            out.append(tweet)
    out.sort(key=lambda t: (t.created_at, t.id))
    return out
