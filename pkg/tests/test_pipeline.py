import random

import pytest

from lambretta.baselines import precision_recall_f1
from lambretta.benchmark import make_benchmark
from lambretta.corpus import search_all_terms
from lambretta.ltr import Hyperparams, train_bagged
from lambretta.pipeline import (
    CATEGORIES,
    ModerationCandidate,
    PipelineError,
    build_training_instances,
    dedupe_keyword_sets,
    derive_keywords,
    false_negative_report,
    false_positive_rate,
    flag_candidates,
    read_candidates,
    write_candidates,
    UniqueKeywordSet,
)
from lambretta.textquery import generate_candidates, normalize

from conftest import linear_scan_all_terms, make_tweet


@pytest.fixture(scope="module")
def trained():
    bench = make_benchmark(n_claims=16, n_background=400, seed=7)
    from lambretta.embedding import EmbeddingCache, HashingEncoder

    enc = EmbeddingCache(HashingEncoder(dim=128))
    annotated = [(bc.claim, bc.gt_terms) for bc in bench.claims]
    instances, _ = build_training_instances(annotated, bench.corpus, enc, k=20)
    model = train_bagged(instances, Hyperparams(n_trees=15, n_leaves=5, n_bags=1), seed=0)
    return bench, enc, model


class TestDeriveKeywords:
    def test_returns_planted_ground_truth(self, trained):
        bench, enc, model = trained
        bc = bench.claims[0]
        best = derive_keywords(bc.claim, model, bench.corpus, enc, k=20)
        assert best.terms == bc.gt_terms

    def test_ground_truth_is_f1_optimal(self, trained):
        """Brute-force F1 over every candidate confirms the planted set wins."""
        bench, enc, model = trained
        bc = bench.claims[1]
        tokens = normalize(bc.claim.text)
        best_f1, best_terms = -1.0, None
        for cand in generate_candidates(bc.claim.claim_id, tokens):
            retrieved = frozenset(
                t.id for t in search_all_terms(bench.corpus, cand.terms)
            )
            _, _, f1 = precision_recall_f1(retrieved, bc.relevant_ids)
            if f1 > best_f1:
                best_f1, best_terms = f1, cand.terms
        assert best_terms == bc.gt_terms
        assert derive_keywords(bc.claim, model, bench.corpus, enc).terms == bc.gt_terms

    def test_unresolvable_claim_errors(self, trained):
        bench, enc, model = trained
        from lambretta.claims import ClaimRecord

        claim = ClaimRecord(claim_id="ghost", text="xyzzyword plughword quuxword",
                            source_tweet_ids=(), score=0.9)
        with pytest.raises(PipelineError) as err:
            derive_keywords(claim, model, bench.corpus, enc)
        assert err.value.claim_id == "ghost"

    def test_deterministic(self, trained):
        bench, enc, model = trained
        bc = bench.claims[2]
        a = derive_keywords(bc.claim, model, bench.corpus, enc)
        b = derive_keywords(bc.claim, model, bench.corpus, enc)
        assert a.terms == b.terms


class TestDedupe:
    def test_identical_sets_collapse(self):
        out = dedupe_keyword_sets([
            ("c1", frozenset({"michigan", "dead", "ballot"})),
            ("c2", frozenset({"ballot", "michigan", "dead"})),
        ])
        assert len(out) == 1
        assert out[0].claim_ids == ("c1", "c2")

    def test_distinct_inputs_preserved(self):
        inputs = [(f"c{i}", frozenset({f"a{i}", f"b{i}"})) for i in range(10)]
        assert len(dedupe_keyword_sets(inputs)) == 10

    def test_planted_duplication_rate(self):
        # 700 claims; each reuses an earlier set with probability 0.3, so the
        # generator knows the expected unique count (~490)
        rng = random.Random(99)
        sets = []
        per_claim = []
        for i in range(700):
            if sets and rng.random() < 0.3:
                terms = rng.choice(sets)
            else:
                terms = frozenset({f"u{i}", f"v{i}"})
                sets.append(terms)
            per_claim.append((f"c{i}", terms))
        unique = dedupe_keyword_sets(per_claim)
        assert abs(len(unique) - 490) <= 20
        assert sum(len(u.claim_ids) for u in unique) == 700


class TestFlagCandidates:
    @pytest.fixture
    def planted(self):
        tweets = []
        # 12 discussion tweets across 3 claims (4 each)
        specs = [
            ("claimA", ["wolf", "river"]),
            ("claimB", ["stone", "bridge"]),
            ("claimC", ["amber", "light"]),
        ]
        n = 0
        for _, words in specs:
            for i in range(4):
                tweets.append(make_tweet(
                    f"d{n}", f"{words[0]} {words[1]} discussion number {i}",
                    created_at=1000 + n,
                ))
                n += 1
        for i in range(50):
            tweets.append(make_tweet(f"bg{i}", f"unrelated filler text {i}", created_at=2000 + i))
        from lambretta.corpus import Corpus

        return Corpus(tweets), specs

    def test_planted_tweets_flagged_exactly(self, planted):
        corpus, specs = planted
        unique = [UniqueKeywordSet(frozenset(w), (c,)) for c, w in specs]
        result = flag_candidates(unique, corpus)
        assert len(result.candidates) == 12
        # matches the linear-scan oracle per keyword set
        for uks in unique:
            expected = {t.id for t in linear_scan_all_terms(corpus, uks.terms)}
            got = {c.tweet_id for c in result.candidates if c.claim_id == uks.claim_ids[0]}
            assert got == expected

    def test_one_query_per_unique_set(self, planted):
        corpus, specs = planted
        unique = dedupe_keyword_sets([
            ("claimA", frozenset(specs[0][1])),
            ("claimD", frozenset(specs[0][1])),  # duplicate set, second claim
            ("claimB", frozenset(specs[1][1])),
        ])
        result = flag_candidates(unique, corpus)
        assert result.queries_issued == 2  # two unique sets only

    def test_tweet_matching_two_claims_yields_two_records(self, planted):
        corpus, specs = planted
        unique = dedupe_keyword_sets([
            ("claimA", frozenset(specs[0][1])),
            ("claimX", frozenset(specs[0][1])),
        ])
        result = flag_candidates(unique, corpus)
        by_tweet = {}
        for cand in result.candidates:
            by_tweet.setdefault(cand.tweet_id, set()).add(cand.claim_id)
        assert all(v == {"claimA", "claimX"} for v in by_tweet.values())

    def test_matched_terms_present_in_tweets(self, planted):
        corpus, specs = planted
        unique = [UniqueKeywordSet(frozenset(w), (c,)) for c, w in specs]
        for cand in flag_candidates(unique, corpus).candidates:
            tokens = set(corpus.normalize(corpus.get(cand.tweet_id).text).tokens)
            assert cand.matched_terms <= tokens
            assert cand.status == "pending"

    def test_flagged_at_deterministic(self, planted):
        corpus, specs = planted
        unique = [UniqueKeywordSet(frozenset(specs[0][1]), ("claimA",))]
        a = flag_candidates(unique, corpus)
        b = flag_candidates(unique, corpus)
        assert [c.flagged_at for c in a.candidates] == [c.flagged_at for c in b.candidates]


class TestValidationReports:
    def _cands(self, claim_id, tweet_ids):
        return [
            ModerationCandidate(tweet_id=t, claim_id=claim_id,
                                matched_terms=frozenset({"a", "b"}), flagged_at=0)
            for t in tweet_ids
        ]

    def test_superset_zero_fn(self):
        flagged = self._cands("c", ["t1", "t2", "t3"])
        report = false_negative_report(flagged, {"c": frozenset({"t1", "t2"})})
        assert report.per_claim["c"] == 0.0 and report.pooled == 0.0

    def test_disjoint_full_fn(self):
        flagged = self._cands("c", ["x1"])
        report = false_negative_report(flagged, {"c": frozenset({"t1", "t2"})})
        assert report.per_claim["c"] == 1.0

    def test_hand_set_difference(self):
        relevant = frozenset(f"t{i}" for i in range(20))
        flagged = self._cands("c", [f"t{i}" for i in range(18)])
        report = false_negative_report(flagged, {"c": relevant})
        assert report.per_claim["c"] == pytest.approx(0.10)
        assert report.missing["c"] == frozenset({"t18", "t19"})

    def test_empty_ground_truth_rejected(self):
        with pytest.raises(ValueError):
            false_negative_report([], {})
        with pytest.raises(ValueError):
            false_negative_report([], {"c": frozenset()})

    def test_false_positive_rate(self):
        flagged = self._cands("c", ["t1", "t2", "x1", "x2"])
        rate = false_positive_rate(flagged, {"c": frozenset({"t1", "t2"})})
        assert rate == 0.5
        assert false_positive_rate([], {"c": frozenset({"t1"})}) == 0.0


class TestCandidateIO:
    def test_round_trip_and_determinism(self, tmp_path):
        cands = [
            ModerationCandidate("t2", "c1", frozenset({"a", "b"}), 100),
            ModerationCandidate("t1", "c2", frozenset({"x", "y"}), 100,
                                status="labeled", categories=frozenset({"satire"})),
        ]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_candidates(cands, str(p1))
        write_candidates(list(reversed(cands)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()  # sorted output
        loaded = read_candidates(str(p1))
        assert set(loaded) == set(cands)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            ModerationCandidate("t", "c", frozenset({"a"}), 0, status="labeled")
        with pytest.raises(ValueError):
            ModerationCandidate("t", "c", frozenset({"a"}), 0,
                                categories=frozenset({"satire"}))
        with pytest.raises(ValueError):
            ModerationCandidate("t", "c", frozenset({"a"}), 0, status="odd")
        with pytest.raises(ValueError):
            ModerationCandidate("t", "c", frozenset({"a"}), 0, status="labeled",
                                categories=frozenset({"unknowncat"}))
        assert len(CATEGORIES) == 7


class TestTrainingInstances:
    def test_retention_stats(self, trained):
        bench, enc, _ = trained
        annotated = [(bc.claim, bc.gt_terms) for bc in bench.claims]
        instances, stats = build_training_instances(annotated, bench.corpus, enc, k=20)
        assert all(s.positive_retained for s in stats)
        assert all(s.n_retained <= s.n_candidates for s in stats)
        positives = [i for i in instances if i.relevance == 1]
        assert len(positives) == len(bench.claims)
