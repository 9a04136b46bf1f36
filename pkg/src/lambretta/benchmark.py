"""Synthetic claim benchmark with planted ground truth.

Each generated claim hides a unique three-term entity keyword set inside a
longer span of shared topic vocabulary. The corpus then gets, per claim:

* discussion tweets containing the full keyword set (the relevant set),
* partial-relevant tweets missing one keyword (recall losses for AND
  retrieval),
* junk tweets matching only a two-term subset of the keywords, with the
  subset repeated (they sit inside the claim-similarity band of real
  discussion, so score-threshold methods cannot cleanly cut them away,
  while full-set AND retrieval ignores them),
* occasionally an irrelevant tweet that happens to contain all three terms,
* retweet copies that every retrieval path must ignore,

plus a pool of topic/noise background tweets. Entity terms never leak into
the background, so the planted relevant sets are exact by construction and
false-positive/false-negative accounting is well defined. Tweet lengths and
compositions vary widely on purpose: threshold methods see overlapping
score bands while exact keyword matching does not care.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .claims import ClaimRecord, claim_id_for
from .corpus import Corpus, Tweet

__all__ = ["BenchmarkClaim", "Benchmark", "make_benchmark", "write_benchmark"]

WINDOW_START = 1604188800  # 2020-11-01 00:00:00 UTC
WINDOW_END = 1609459199  # 2020-12-31 23:59:59 UTC

TOPIC_WORDS = """
ballot ballots vote votes voting voter voters election elections fraud
machine machines county officials official absentee mail signature
signatures audit recount poll polls watcher watchers observer observers
counting count deadline postal registration precinct tabulation scanner
scanners dropbox affidavit witness lawsuit certify certification batch
batches spike totals tally software glitch server memory card cards
update upload results result margin lead swing state states turnout
curbside provisional envelope envelopes rejected cured verified
challenge challenged canvass hearing testimony sworn video footage
camera suitcase suitcases table tables midnight overnight truck
delivery shipment found discovered missing destroyed shredded dumped
flipped switched injected duplicate duplicated deceased ineligible
unregistered clerks clerk notary procedures manual manuals training
challengers rolls purge purged backlog courier couriers transcript
transcripts subpoena injunction appeal appeals litigation plaintiff
plaintiffs defendant defendants deposition exhibit exhibits evidence
forensic analyst analysts auditor auditors inspector inspectors
canvasser canvassers recorder recorders printer printers toner barcode
barcodes timestamp timestamps logbook logbooks chain custody seals
sealed unsealed locks locked unlocked warehouse warehouses loading dock
docks pallet pallets crate crates bin bins folder folders stack stacks
pile piles spreadsheet spreadsheets database databases terminal
terminals modem modems router routers network networks firewall
passwords password login logins audit-trail checksum checksums
signature-match mismatch mismatches discrepancy discrepancies variance
variances anomaly anomalies irregularity irregularities pattern
patterns cluster clusters surge surges dip dips drop drops jump jumps
shift shifts adjudication adjudicated ballots-cast undervote overvote
undervotes overvotes spoiled spoilage curing deadline-day extension
extensions postmark postmarks barcode-scan receipt receipts stub stubs
manifest manifests seal-log transfer transfers transport transported
escort escorted observer-area barrier barriers window windows distance
signature-book pollbook pollbooks epollbook epollbooks checkin
checkins line lines wait waits queue queues turnout-rate registration-roll
statement statements presser briefing briefings correspondent
correspondents bulletin bulletins ticker tickers segment segments
panel panels coverage broadcast broadcasts replay replays livestream
livestreams clip clips monitor monitors courtroom filings filing docket
dockets motion motions ruling rulings verdict verdicts judge judges
magistrate magistrates clerk-office county-board commissioners
commissioner supervisor supervisors registrar registrars secretary
secretaries legislature legislatures session sessions statute statutes
ordinance ordinances directive directives memo memos circular circulars
guidance guidelines protocol protocols checklist checklists form forms
affidavits declarations declaration attestation attestations witnesses
notarized certified recertified decertified certification-vote
""".split()

NOISE_WORDS = """
coffee breakfast sunshine playlist garden recipe weekend marathon
puppy kitten bicycle traffic concert movie sequel episode stadium
burger tacos pizza sourdough latte yoga hiking camping fishing
painting guitar piano novel chapter museum gallery flight airport
hotel beach mountain river autumn winter sweater scarf candle
pumpkin cinnamon chocolate vanilla caramel birthday anniversary
wedding graduation reunion neighbor landlord garage basement attic
closet furniture sofa blanket pillow houseplant succulent terrarium
aquarium hamster parrot sticker notebook pencil backpack umbrella
raincoat sneakers laces skateboard scooter helmet gloves thermos
lasagna smoothie espresso croissant bagel pretzel popcorn trivia
puzzle crossword gardening compost seedling orchard vineyard picnic
kayak canoe paddle snorkel surfboard campfire lantern hammock trail
summit valley meadow creek pond lighthouse ferry harbor marina dune
""".split()

_ENTITY_BASES = """
marwick ashford delmont kerrville osgood brantley feldspar norcross
quimby ravenna stockard talmadge umberly vexford wadlow yarrow zephyr
alcott birchwood crandall dunmore ellsworth fairbanks gresham hollis
ivering jarrell kimbrough landry mercer norwood oakhurst pemberton
quillan redfern sablewood thackery uplander vossler westbrook yancey
abernathy bickford caldwell dunstan eastman fenwick gladstone harmon
ingalls jephson kirkwood lattimer mansell newcomb oswald prescott
quarles rothwell stanfield tillman underhill vance whitcomb yeardley
""".split()

_ENTITY_SUFFIXES = ("", "ton", "ville", "field", "port", "burg", "dale", "shire", "gate", "moor")

STOPGLUE = ("the", "a", "of", "in", "on", "for", "with", "about", "from", "and", "this", "that")


@dataclass
class BenchmarkClaim:
    claim: ClaimRecord
    gt_terms: frozenset[str]
    relevant_ids: frozenset[str]
    coverage_rate: float = 0.0


@dataclass
class Benchmark:
    corpus: Corpus
    claims: list[BenchmarkClaim] = field(default_factory=list)

    def ground_truth(self) -> dict[str, frozenset[str]]:
        return {bc.claim.claim_id: bc.relevant_ids for bc in self.claims}

    def gt_terms(self) -> dict[str, frozenset[str]]:
        return {bc.claim.claim_id: bc.gt_terms for bc in self.claims}

    def claims_with_truth(self) -> list[tuple[ClaimRecord, frozenset[str]]]:
        return [(bc.claim, bc.relevant_ids) for bc in self.claims]


def _entity_pool(rng: random.Random) -> list[str]:
    pool = [base + suffix for base in _ENTITY_BASES for suffix in _ENTITY_SUFFIXES]
    rng.shuffle(pool)
    return pool


class _TweetFactory:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.counter = 0
        self.tweets: list[Tweet] = []

    def add(self, tokens: list[str], moderated: bool = False, is_retweet: bool = False,
            is_quote: bool = False) -> Tweet:
        rng = self.rng
        words = []
        for tok in tokens:
            if rng.random() < 0.25:
                words.append(rng.choice(STOPGLUE))
            words.append(tok)
        self.counter += 1
        tweet = Tweet(
            id=f"t{self.counter:06d}",
            text=" ".join(words),
            author_id=f"u{rng.randrange(1, 900):04d}",
            created_at=rng.randrange(WINDOW_START, WINDOW_END),
            is_retweet=is_retweet,
            is_quote=is_quote,
            like_count=min(int(rng.expovariate(0.02)), 5000),
            retweet_count=min(int(rng.expovariate(0.05)), 2000),
            moderation_label="warning" if moderated else "none",
        )
        self.tweets.append(tweet)
        return tweet


def _claim_text(rng: random.Random, fillers: list[str], gt: list[str]) -> str:
    """One claim sentence; the leading keyword pair recurs like real claims do.

    In the common variant a stopword splits the full keyword trigram in the
    raw text, so phrase extractors that segment at stopwords see only the
    repeated pair while stopword-stripped n-grams still contain the full
    contiguous set. The rarer variant leaves the trigram intact, which
    phrase extractors do get right.
    """
    f = fillers
    g = gt
    glue = "about" if rng.random() < 0.75 else ""
    middle = f"{g[0]} {g[1]} {glue} {g[2]}".replace("  ", " ")
    return (
        f"The {f[0]} of {f[1]} with the {middle} and the {g[0]} {g[1]} "
        f"from {f[2]} while the {g[0]} {g[1]} by {f[3]} into {f[4]} "
        f"after {f[5]} under {f[6]} during {f[7]} over {f[8]} below {f[9]} "
        f"at {f[10]} on {f[11]}"
    )


def make_benchmark(
    n_claims: int = 200,
    n_background: int = 2000,
    seed: int = 0,
) -> Benchmark:
    """Generate the benchmark corpus and its planted ground truth."""
    rng = random.Random(seed)
    entities = _entity_pool(rng)
    if len(entities) < 3 * n_claims:
        raise ValueError(
            f"entity pool ({len(entities)}) too small for {n_claims} claims"
        )
    factory = _TweetFactory(rng)
    bench_claims: list[BenchmarkClaim] = []

    for ci in range(n_claims):
        gt = [entities.pop() for _ in range(3)]
        fillers = rng.sample(TOPIC_WORDS, 12)
        other_topics = [w for w in TOPIC_WORDS if w not in fillers]
        text = _claim_text(rng, fillers, gt)
        claim = ClaimRecord(
            claim_id=claim_id_for(text),
            text=text,
            source_tweet_ids=(f"seed{ci:04d}",),
            score=round(rng.uniform(0.55, 0.99), 3),
        )
        coverage_rate = rng.choice([0.0, 0.02, 0.05, 0.08, 0.12, 0.2, 0.35])
        relevant: list[str] = []
        # some claims are narrow: barely any partial or subset-matching
        # traffic exists, so under-specified candidates are genuinely tied
        # with the planted set instead of separable
        ambiguous = rng.random() < 0.15

        n_disc = rng.randint(22, 30)
        discussion: list[Tweet] = []
        for _ in range(n_disc):
            # discussion is bimodal: terse echoes repeat the keywords, long
            # commentary mentions each once and buries it in other topics, so
            # lexical score bands smear across the junk band instead of
            # stacking neatly above it
            tokens = []
            if rng.random() < 0.35:
                tokens += gt + rng.sample(other_topics, rng.randint(6, 14))
                tokens += rng.sample(NOISE_WORDS, rng.randint(0, 4))
            else:
                for term in gt:
                    tokens += [term] * rng.randint(2, 4)
                tokens += rng.sample(other_topics, rng.randint(2, 8))
                if rng.random() < 0.4:
                    tokens += rng.sample(NOISE_WORDS, rng.randint(1, 4))
            rng.shuffle(tokens)
            tweet = factory.add(tokens, moderated=rng.random() < coverage_rate)
            discussion.append(tweet)
            relevant.append(tweet.id)

        # relevant tweets one keyword short: AND retrieval will miss these
        for _ in range(rng.randint(0, 1) if ambiguous else rng.randint(2, 5)):
            keep = rng.sample(gt, 2)
            tokens = keep * rng.randint(2, 3) + rng.sample(other_topics, rng.randint(3, 8))
            rng.shuffle(tokens)
            tweet = factory.add(tokens, moderated=rng.random() < coverage_rate / 2)
            relevant.append(tweet.id)

        # junk matching only a two-term subset of the keywords; repeating the
        # subset pushes its embedding and term weight into the discussion
        # band, so under-specified queries pay a precision price
        # the leading pair gets the heaviest junk traffic: it is what claim
        # text repetition tempts naive extractors into querying
        pair_volumes = [(gt[0], gt[1], 10, 16), (gt[1], gt[2], 4, 8), (gt[0], gt[2], 4, 8)]
        for a, b, lo_n, hi_n in pair_volumes:
            for _ in range(rng.randint(0, 1) if ambiguous else rng.randint(lo_n, hi_n)):
                tokens = [a, b] * rng.randint(3, 4) + rng.sample(
                    NOISE_WORDS, rng.randint(3, 8)
                )
                if rng.random() < 0.4:
                    tokens += rng.sample(other_topics, rng.randint(1, 3))
                rng.shuffle(tokens)
                factory.add(tokens)

        # occasionally an off-topic tweet still contains every keyword
        if rng.random() < 0.5:
            tokens = list(gt) + rng.sample(NOISE_WORDS, rng.randint(6, 12))
            rng.shuffle(tokens)
            factory.add(tokens)

        # retweet copies of discussion tweets; excluded everywhere
        for src in rng.sample(discussion, min(len(discussion), rng.randint(2, 4))):
            factory.add(src.text.split(), is_retweet=True)

        bench_claims.append(
            BenchmarkClaim(
                claim=claim,
                gt_terms=frozenset(gt),
                relevant_ids=frozenset(relevant),
                coverage_rate=coverage_rate,
            )
        )

    for _ in range(n_background):
        tokens = rng.sample(TOPIC_WORDS, rng.randint(2, 6))
        if rng.random() < 0.6:
            tokens += rng.sample(NOISE_WORDS, rng.randint(1, 5))
        rng.shuffle(tokens)
        factory.add(tokens, is_quote=rng.random() < 0.05)

    corpus = Corpus(factory.tweets)
    return Benchmark(corpus=corpus, claims=bench_claims)


def write_benchmark(benchmark: Benchmark, corpus_path: str, claims_path: str,
                    truth_path: str | None = None) -> None:
    """Dump a benchmark as corpus JSONL + claims JSONL (+ ground-truth JSON)."""
    import json
    from datetime import datetime, timezone

    from .corpus import tweet_to_record

    with open(corpus_path, "w", encoding="utf-8") as fh:
        for tweet in benchmark.corpus.tweets:
            record = tweet_to_record(tweet)
            record["created_at"] = datetime.fromtimestamp(
                tweet.created_at, tz=timezone.utc
            ).strftime("%Y-%m-%dT%H:%M:%SZ")
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    with open(claims_path, "w", encoding="utf-8") as fh:
        for bc in benchmark.claims:
            fh.write(
                json.dumps(
                    {
                        "claim_id": bc.claim.claim_id,
                        "text": bc.claim.text,
                        "source_tweet_ids": list(bc.claim.source_tweet_ids),
                        "score": bc.claim.score,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    if truth_path:
        with open(truth_path, "w", encoding="utf-8") as fh:
            json.dump(
                {bc.claim.claim_id: sorted(bc.relevant_ids) for bc in benchmark.claims},
                fh,
                sort_keys=True,
                indent=2,
            )
