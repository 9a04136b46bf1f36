"""Acceptance gate: one test per criterion, each printing a PASS line.

Criteria touching the phrase-scale numbers of the original study are run as
synthetic-benchmark analogs (the study's corpus is private); everything
else is exact. Every test enforces its own wall-clock budget.
"""

import itertools
import json
import random
import time
import warnings

import numpy as np
import pytest

from lambretta.baselines import METHODS, compare_methods
from lambretta.benchmark import make_benchmark
from lambretta.claims import ScoreThreshold, calibrate_threshold, filter_claims, Proposition
from lambretta.corpus import Corpus, Tweet, load_index, save_index, search_all_terms
from lambretta.embedding import EmbeddingCache, HashingEncoder
from lambretta.features import FeatureVector, FEATURE_NAMES
from lambretta.ltr import (
    Hyperparams,
    RankingInstance,
    average_precision,
    kfold_cv,
    load_model,
    map_score,
    rank,
    save_model,
    train_bagged,
)
from lambretta.pipeline import (
    PipelineError,
    build_training_instances,
    dedupe_keyword_sets,
    derive_keywords,
    false_negative_report,
    false_positive_rate,
    flag_candidates,
    write_candidates,
)
from lambretta.textquery import CandidateQuery, jaccard_similarity, normalize, strip_suffixes

BENCH_PARAMS = Hyperparams(
    n_trees=50, n_leaves=8, min_leaf_support=1, n_bags=4, query_subsample=0.8
)


def report(criterion, elapsed, budget, detail):
    assert elapsed < budget, f"criterion {criterion} took {elapsed:.1f}s (budget {budget}s)"
    print(f"\nACCEPTANCE {criterion}: PASS ({detail}; {elapsed:.1f}s < {budget}s)")


@pytest.fixture(scope="module")
def bench():
    """The bundled synthetic claim benchmark: 200 claims, planted truth."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = make_benchmark(n_claims=200, n_background=2000, seed=0)
        encoder = EmbeddingCache(HashingEncoder(dim=256))
        annotated = [(bc.claim, bc.gt_terms) for bc in b.claims]
        instances, stats = build_training_instances(annotated, b.corpus, encoder, k=20)
    return b, encoder, instances, stats


@pytest.fixture(scope="module")
def trained_model(bench):
    """Model trained on the first half of the benchmark's claims."""
    b, encoder, instances, _ = bench
    train_ids = {bc.claim.claim_id for bc in b.claims[:100]}
    train = [i for i in instances if i.query_id in train_ids]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train_bagged(train, BENCH_PARAMS, seed=0)
    return model, train_ids


def linear_scan(corpus, terms):
    out = []
    for t in corpus.tweets:
        if t.is_retweet or t.is_quote:
            continue
        tokens = set(corpus.normalize(t.text).tokens)
        if all(x in tokens for x in terms):
            out.append(t)
    out.sort(key=lambda t: (t.created_at, t.id))
    return out


def test_criterion_1_index_oracle_equivalence():
    start = time.time()
    rng = random.Random(0)
    checked = 0
    for _ in range(50):
        n = rng.randint(200, 10_000)
        vocab = [f"v{i}" for i in range(rng.randint(50, 5000))]
        tweets = [
            Tweet(
                id=f"t{i}",
                text=" ".join(rng.choices(vocab, k=rng.randint(3, 12))),
                created_at=rng.randint(0, 10**6),
                is_retweet=rng.random() < 0.05,
                is_quote=rng.random() < 0.05,
            )
            for i in range(n)
        ]
        corpus = Corpus(tweets)
        for _ in range(10):
            terms = set(rng.sample(vocab, rng.randint(1, 3)))
            got = [t.id for t in search_all_terms(corpus, terms)]
            want = [t.id for t in linear_scan(corpus, terms)]
            assert got == want
            checked += 1
    assert checked == 500
    report(1, time.time() - start, 60,
           "search_all_terms == linear-scan oracle on 50 corpora x 500 term sets, exact")


def brute_force_ap(relevance):
    total = sum(relevance)
    if total == 0:
        return 0.0
    acc = 0.0
    for k in range(1, len(relevance) + 1):
        if relevance[k - 1]:
            acc += sum(relevance[:k]) / k
    return acc / total


def test_criterion_2_map_exhaustive():
    start = time.time()
    checked = 0
    for n in range(1, 9):
        for bits in itertools.product([0, 1], repeat=n):
            rel = list(bits)
            if any(rel):
                assert map_score([rel]) == brute_force_ap(rel)
            assert average_precision(rel) == brute_force_ap(rel)
            checked += 1
    report(2, time.time() - start, 10,
           f"MAP == exhaustive AP enumeration on all {checked} rankings of length <= 8")


def _separable(n_queries, n_cands, seed, shuffle_labels=False):
    rng = np.random.default_rng(seed)
    out = []
    for q in range(n_queries):
        rels = np.zeros(n_cands, dtype=int)
        rels[: rng.integers(1, 4)] = 1
        rng.shuffle(rels)
        labels = rels.copy()
        if shuffle_labels:
            rng.shuffle(labels)
        for i in range(n_cands):
            values = [float(rels[i])] + [float(rng.normal()) for _ in range(10)]
            fv = FeatureVector(hits=int(values[0]), **dict(zip(FEATURE_NAMES[1:], values[1:])))
            out.append(
                RankingInstance(
                    query_id=f"q{q:03d}",
                    candidate=CandidateQuery(
                        claim_id=f"q{q:03d}", terms=frozenset({f"a{q}_{i}", f"b{q}_{i}"})
                    ),
                    features=fv,
                    relevance=int(labels[i]),
                )
            )
    return out


def test_criterion_3_lambdamart_sanity():
    start = time.time()
    params = Hyperparams(n_trees=30, n_leaves=7, min_leaf_support=1, n_bags=1)
    separable = _separable(100, 30, seed=1)
    result = kfold_cv(separable, params, k=5, seed=0)
    assert result.mean_map == pytest.approx(1.0, abs=0.01)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        shuffled = _separable(100, 30, seed=2, shuffle_labels=True)
        shuffled_result = kfold_cv(shuffled, params, k=5, seed=0)
    assert shuffled_result.mean_map < 0.5
    report(3, time.time() - start, 120,
           f"separable CV MAP {result.mean_map:.3f} = 1 +- 0.01, "
           f"shuffled CV MAP {shuffled_result.mean_map:.3f} < 0.5")


def test_criterion_4_benchmark_map(bench):
    start = time.time()
    _, _, instances, _ = bench
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = kfold_cv(instances, BENCH_PARAMS, k=5, seed=0)
    assert result.mean_map >= 0.75
    report(4, time.time() - start, 600,
           f"benchmark 5-fold CV mean MAP {result.mean_map:.3f} >= 0.75")


def test_criterion_5_filtered_query_set(bench):
    start = time.time()
    _, _, _, stats = bench
    assert all(s.positive_retained for s in stats), "a planted positive was filtered out"
    reduction = sum(s.n_candidates for s in stats) / sum(s.n_retained for s in stats)
    assert reduction >= 10.0
    report(5, time.time() - start, 120,
           f"k=20 keeps 200/200 planted candidates, candidate-set reduction {reduction:.1f}x >= 10x")


def test_criterion_6_end_to_end_fp_fn(trained_model):
    start = time.time()
    model, _ = trained_model
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fixture = make_benchmark(n_claims=60, n_background=1800, seed=101)
    assert 4500 <= len(fixture.corpus) <= 5600  # the ~5k-tweet fixture corpus
    encoder = EmbeddingCache(HashingEncoder(dim=256))
    per_claim = []
    for bc in fixture.claims:
        try:
            best = derive_keywords(bc.claim, model, fixture.corpus, encoder, k=20)
        except PipelineError:
            continue
        per_claim.append((bc.claim.claim_id, best.terms))
    unique = dedupe_keyword_sets(per_claim)
    flagged = flag_candidates(unique, fixture.corpus)
    truth = fixture.ground_truth()
    fn = false_negative_report(flagged.candidates, truth)
    fp = false_positive_rate(flagged.candidates, truth)
    assert fp <= 0.05
    assert fn.pooled <= 0.20
    report(6, time.time() - start, 300,
           f"pipeline on {len(fixture.corpus)}-tweet fixture: "
           f"FP {fp * 100:.2f}% <= 5%, FN {fn.pooled * 100:.2f}% <= 20%")


def test_criterion_7_baseline_ordering(bench, trained_model):
    start = time.time()
    b, encoder, _, _ = bench
    model, train_ids = trained_model
    eval_pairs = [
        (bc.claim, bc.relevant_ids)
        for bc in b.claims
        if bc.claim.claim_id not in train_ids
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = compare_methods(eval_pairs, b.corpus, encoder, model, k=20)
    fractions = {m: result.fraction_at_least(m, 0.8) for m in METHODS}
    assert fractions["ltr"] >= 0.6
    for method in METHODS:
        if method != "ltr":
            assert fractions["ltr"] > fractions[method], (method, fractions)
            assert result.reduction_factors[method] > 1.0, (method, result.reduction_factors)
    report(7, time.time() - start, 600,
           "fraction(F1>=0.8): " + ", ".join(f"{m} {fractions[m]:.2f}" for m in METHODS)
           + "; reduction " + ", ".join(
               f"{m} {f:.2f}x" for m, f in sorted(result.reduction_factors.items())))


def test_criterion_8_claim_filter_calibration():
    start = time.time()
    # 300 scores on a uniform grid; labels flip at 0.52, with a few flipped
    # outliers far from the boundary that cannot move the optimum
    step = 1 / 300
    labeled = []
    for i in range(300):
        score = i / 300
        label = score >= 0.52
        if i in (10, 20, 30, 40, 50):
            label = True
        if i in (280, 285, 290, 295, 299):
            label = False
        labeled.append((score, label))
    threshold, summary = calibrate_threshold(labeled)
    assert abs(threshold.value - 0.52) <= step + 1e-9
    # the published worked examples at the shipped operating point
    kept = filter_claims(
        [
            (Proposition("a", "objective statistical assertion", 0), 0.85),
            (Proposition("b", "subjective quip", 0), 0.285),
        ],
        ScoreThreshold(0.490),
    )
    assert len(kept) == 1 and kept[0].score == 0.85
    report(8, time.time() - start, 5,
           f"recovered cut {threshold.value:.4f} within one grid step of 0.52; "
           "0.85 kept / 0.285 dropped at 0.490")


def brute_force_pairs(texts_by_id, lo, hi):
    import re

    token_sets = {}
    for tid, text in texts_by_id.items():
        cleaned = re.sub(r"@\w+", " ", text)
        toks = normalize(cleaned, stopwords=frozenset()).tokens
        token_sets[tid] = frozenset(strip_suffixes(t) for t in toks)
    out = []
    for a, b in itertools.combinations(sorted(texts_by_id), 2):
        sim = jaccard_similarity(token_sets[a], token_sets[b])
        if lo <= sim < hi:
            out.append((a, b))
    return sorted(out)


def test_criterion_9_jaccard_pair_oracle():
    from lambretta.analysis import near_duplicate_pairs
    from lambretta.pipeline import ModerationCandidate

    start = time.time()
    rng = random.Random(9)
    vocab = [f"word{i}" for i in range(400)]
    for fixture in range(3):
        texts = {}
        tweets = []
        for i in range(170):
            texts[f"t{i:03d}"] = " ".join(rng.sample(vocab, rng.randint(4, 14)))
        for i in range(15):
            base = rng.sample(vocab, 8)
            texts[f"p{i:02d}a"] = " ".join(base + [f"ua{fixture}_{i}"])
            texts[f"p{i:02d}b"] = " ".join(base + [f"ub{fixture}_{i}"])
        for tid, text in texts.items():
            tweets.append(Tweet(id=tid, text=text, created_at=len(tweets)))
        corpus = Corpus(tweets)
        candidates = [
            ModerationCandidate(tweet_id=tid, claim_id="c",
                                matched_terms=frozenset({"word0", "word1"}), flagged_at=0)
            for tid in texts
        ]
        got = [(a, b) for a, b, _ in near_duplicate_pairs(candidates, corpus).pairs]
        want = brute_force_pairs(texts, 0.75, 0.9)
        assert got == want
        assert len(got) >= 15
    report(9, time.time() - start, 30,
           "near-duplicate pairs == O(n^2) brute force on 3 x 200-tweet fixtures, exact")


def test_criterion_10_determinism_and_persistence(bench, trained_model, tmp_path):
    start = time.time()
    b, encoder, instances, _ = bench
    model, train_ids = trained_model

    # run-to-run byte identity of model files
    train = [i for i in instances if i.query_id in train_ids]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        again = train_bagged(train, BENCH_PARAMS, seed=0)
    p1, p2 = tmp_path / "m1.lamltr", tmp_path / "m2.lamltr"
    save_model(model, str(p1))
    save_model(again, str(p2))
    assert p1.read_bytes() == p2.read_bytes()

    # run-to-run byte identity of candidate exports
    eval_claims = b.claims[100:120]
    exports = []
    for run in range(2):
        per_claim = []
        for bc in eval_claims:
            best = derive_keywords(bc.claim, model, b.corpus, encoder, k=20)
            per_claim.append((bc.claim.claim_id, best.terms))
        flagged = flag_candidates(dedupe_keyword_sets(per_claim), b.corpus)
        path = tmp_path / f"cands{run}.jsonl"
        write_candidates(flagged.candidates, str(path))
        exports.append(path.read_bytes())
    assert exports[0] == exports[1]

    # index round-trip preserves every query result
    idx_path = tmp_path / "bench.lamidx"
    save_index(b.corpus, str(idx_path))
    loaded = load_index(str(idx_path))
    rng = random.Random(5)
    vocab = sorted(b.corpus.index.postings)
    for _ in range(50):
        terms = set(rng.sample(vocab, rng.randint(1, 3)))
        assert [t.id for t in search_all_terms(loaded, terms)] == [
            t.id for t in search_all_terms(b.corpus, terms)
        ]

    # model round-trip preserves every score
    reloaded = load_model(str(p1))
    X = np.array([i.features.as_tuple() for i in instances[:500]])
    assert np.array_equal(model.score(X), reloaded.score(X))

    report(10, time.time() - start, 120,
           "byte-identical model files and candidate exports; "
           "index/model round-trips preserve all outputs exactly")
