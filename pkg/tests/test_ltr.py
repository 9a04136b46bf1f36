import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lambretta.corpus import PersistenceError
from lambretta.embedding import EmbeddingCache, HashingEncoder
from lambretta.features import FEATURE_NAMES, FEATURE_VERSION, FeatureVector
from lambretta.ltr import (
    BoostedEnsemble,
    CvResult,
    Hyperparams,
    RankingInstance,
    RankingModel,
    TrainingError,
    _query_lambdas,
    assign_folds,
    average_precision,
    build_filtered_query_set,
    default_grid,
    grid_search,
    kfold_cv,
    load_model,
    map_score,
    rank,
    read_letor,
    save_model,
    train_bagged,
    train_lambdamart,
    write_letor,
)
from lambretta.textquery import CandidateQuery

from conftest import make_tweet


def fv(values):
    return FeatureVector(hits=int(values[0]), **dict(zip(FEATURE_NAMES[1:], values[1:])))


def instance(qid, tag, values, relevance):
    return RankingInstance(
        query_id=qid,
        candidate=CandidateQuery(claim_id=qid, terms=frozenset({f"term{tag}", f"other{tag}"})),
        features=fv(values),
        relevance=relevance,
    )


def separable_dataset(n_queries=20, n_cands=10, seed=0, shuffle_labels=False):
    """Feature 0 equals the true relevance; other features are noise."""
    rng = np.random.default_rng(seed)
    out = []
    for q in range(n_queries):
        rels = np.zeros(n_cands, dtype=int)
        rels[: rng.integers(1, max(2, n_cands // 8) + 1)] = 1
        rng.shuffle(rels)
        labels = rels.copy()
        if shuffle_labels:
            rng.shuffle(labels)
        for i in range(n_cands):
            values = [float(rels[i])] + [float(rng.normal()) for _ in range(10)]
            out.append(instance(f"q{q:03d}", f"{q}_{i:02d}", values, int(labels[i])))
    return out


def brute_force_ap(relevance):
    """Independent AP: precision at each relevant rank, averaged over relevant."""
    rel_total = sum(1 for r in relevance if r)
    if rel_total == 0:
        return 0.0
    acc = 0.0
    for k in range(1, len(relevance) + 1):
        if relevance[k - 1]:
            prefix = sum(1 for r in relevance[:k] if r)
            acc += prefix / k
    return acc / rel_total


class TestLambdaGradients:
    @settings(max_examples=150, deadline=None)
    @given(st.data())
    def test_matches_brute_force_swaps(self, data):
        n = data.draw(st.integers(2, 10))
        labels = np.array(data.draw(
            st.lists(st.integers(0, 1), min_size=n, max_size=n)
        ))
        scores = np.array(data.draw(
            st.lists(st.integers(-3, 3), min_size=n, max_size=n)
        ), dtype=float) / 2.0
        lam, wt = _query_lambdas(scores, labels)
        # brute force: enumerate every (relevant, irrelevant) pair
        blam = np.zeros(n)
        bwt = np.zeros(n)
        order = np.argsort(-scores, kind="stable")
        pos = np.empty(n, dtype=int)
        pos[order] = np.arange(n)
        ranked = list(labels[order])
        base = brute_force_ap(ranked)
        for i in range(n):
            for j in range(n):
                if labels[i] == 1 and labels[j] == 0:
                    swapped = ranked.copy()
                    swapped[pos[i]], swapped[pos[j]] = swapped[pos[j]], swapped[pos[i]]
                    dap = abs(brute_force_ap(swapped) - base)
                    rho = 1.0 / (1.0 + math.exp(scores[i] - scores[j]))
                    blam[i] += rho * dap
                    blam[j] -= rho * dap
                    bwt[i] += rho * (1 - rho) * dap
                    bwt[j] += rho * (1 - rho) * dap
        assert np.allclose(lam, blam, atol=1e-12)
        assert np.allclose(wt, bwt, atol=1e-12)

    def test_pure_queries_produce_no_gradient(self):
        lam, wt = _query_lambdas(np.zeros(4), np.ones(4, dtype=int))
        assert not lam.any() and not wt.any()


class TestMapScore:
    def test_relevant_first(self):
        assert map_score([[1, 0, 0, 0, 0]]) == 1.0

    def test_single_relevant_second(self):
        assert map_score([[0, 1]]) == 0.5

    def test_hand_enumeration(self):
        # relevants at ranks 1 and 3 of 5: (1/1 + 2/3) / 2
        assert map_score([[1, 0, 1, 0, 0]]) == pytest.approx((1 + 2 / 3) / 2)

    def test_exhaustive_small_rankings(self):
        for n in range(1, 9):
            for bits in itertools.product([0, 1], repeat=n):
                if not any(bits):
                    continue
                assert average_precision(list(bits)) == brute_force_ap(list(bits))

    def test_zero_relevant_query_excluded(self):
        with pytest.warns(UserWarning):
            assert map_score([[1, 0], [0, 0]]) == 1.0

    def test_all_queries_empty_rejected(self):
        with pytest.warns(UserWarning):
            with pytest.raises(ValueError):
                map_score([[0, 0]])


class TestTrainLambdamart:
    def test_separable_training_map_one_within_10_trees(self):
        instances = separable_dataset(n_queries=12, n_cands=8, seed=1)
        params = Hyperparams(n_trees=10, n_leaves=4, n_bags=1)
        model = train_lambdamart(instances, params, seed=0)
        assert len(model.trees) == 10
        wrapped = RankingModel(bags=[model], params=params)
        rankings = []
        by_query = {}
        for inst in instances:
            by_query.setdefault(inst.query_id, []).append(inst)
        for group in by_query.values():
            rankings.append([i.relevance for i, _ in rank(wrapped, group)])
        assert map_score(rankings) == 1.0

    def test_single_mixed_query_ranks_relevant_first(self):
        instances = [instance("q", f"{i}", [float(i == 2)] + [0.0] * 10, int(i == 2))
                     for i in range(5)]
        params = Hyperparams(n_trees=5, n_leaves=3, n_bags=1)
        model = RankingModel(bags=[train_lambdamart(instances, params)], params=params)
        ranked = rank(model, instances)
        assert ranked[0][0].relevance == 1

    def test_degenerate_dataset_rejected(self):
        pure = [instance("q", f"{i}", [1.0] * 11, 1) for i in range(4)]
        with pytest.raises(TrainingError):
            train_lambdamart(pure, Hyperparams(n_trees=2, n_bags=1))

    def test_deterministic_model_files(self, tmp_path):
        instances = separable_dataset(n_queries=8, n_cands=6, seed=3)
        params = Hyperparams(n_trees=6, n_leaves=4, n_bags=2, query_subsample=0.75)
        a, b = tmp_path / "a.lamltr", tmp_path / "b.lamltr"
        save_model(train_bagged(instances, params, seed=9), str(a))
        save_model(train_bagged(instances, params, seed=9), str(b))
        assert a.read_bytes() == b.read_bytes()


class TestTrainBagged:
    def test_single_full_bag_equals_plain_lambdamart(self):
        instances = separable_dataset(n_queries=10, n_cands=6, seed=2)
        params = Hyperparams(n_trees=8, n_leaves=4, n_bags=1, query_subsample=1.0)
        bagged = train_bagged(instances, params, seed=5)
        plain = RankingModel(bags=[train_lambdamart(instances, params, seed=5)], params=params)
        by_query = {}
        for inst in instances:
            by_query.setdefault(inst.query_id, []).append(inst)
        for group in by_query.values():
            a = [i.candidate.sorted_terms() for i, _ in rank(bagged, group)]
            b = [i.candidate.sorted_terms() for i, _ in rank(plain, group)]
            assert a == b

    def test_bag_count_serialized(self, tmp_path):
        instances = separable_dataset(n_queries=8, n_cands=6)
        params = Hyperparams(n_trees=3, n_leaves=3, n_bags=5, query_subsample=0.6)
        model = train_bagged(instances, params, seed=0)
        path = tmp_path / "m.lamltr"
        save_model(model, str(path))
        assert len(load_model(str(path)).bags) == 5

    def test_separable_heldout_map_one(self):
        train = separable_dataset(n_queries=20, n_cands=8, seed=4)
        test = separable_dataset(n_queries=6, n_cands=8, seed=99)
        params = Hyperparams(n_trees=20, n_leaves=5, n_bags=8, query_subsample=0.7)
        model = train_bagged(train, params, seed=0)
        by_query = {}
        for inst in test:
            by_query.setdefault(inst.query_id, []).append(inst)
        rankings = [[i.relevance for i, _ in rank(model, g)] for g in by_query.values()]
        assert map_score(rankings) == 1.0


class TestRank:
    def test_equal_features_tie_break_lexicographic(self):
        params = Hyperparams(n_trees=2, n_leaves=3, n_bags=1)
        training = separable_dataset(n_queries=6, n_cands=5, seed=6)
        model = train_bagged(training, params, seed=0)
        same = [0.5] * 11
        insts = [
            RankingInstance("q", CandidateQuery(claim_id="q", terms=frozenset(t)), fv(same), 0)
            for t in ({"zeta", "omega"}, {"alpha", "beta"}, {"alpha", "aardvark"})
        ]
        ranked = rank(model, insts)
        assert [r[0].candidate.sorted_terms() for r in ranked] == [
            ("aardvark", "alpha"), ("alpha", "beta"), ("omega", "zeta"),
        ]

    def test_version_mismatch_rejected(self):
        model = RankingModel(bags=[BoostedEnsemble(trees=[], learning_rate=0.1)],
                             params=Hyperparams(), feature_version="fv0")
        with pytest.raises(ValueError):
            rank(model, [instance("q", "a", [0.0] * 11, 0)])

    def test_empty_instances(self):
        model = RankingModel(bags=[BoostedEnsemble(trees=[], learning_rate=0.1)],
                             params=Hyperparams())
        assert rank(model, []) == []

    def test_ranking_invariant_under_increasing_transform(self):
        instances = separable_dataset(n_queries=4, n_cands=6, seed=8)
        params = Hyperparams(n_trees=5, n_leaves=4, n_bags=1)
        model = train_bagged(instances, params, seed=0)

        class Transformed:
            feature_version = FEATURE_VERSION

            def score(self, X):
                return 3.0 * model.score(X) + 7.0  # strictly increasing

        by_query = {}
        for inst in instances:
            by_query.setdefault(inst.query_id, []).append(inst)
        for group in by_query.values():
            a = [i.candidate.sorted_terms() for i, _ in rank(model, group)]
            b = [i.candidate.sorted_terms() for i, _ in rank(Transformed(), group)]
            assert a == b

    def test_learning_rate_to_zero_approaches_constant_scoring(self):
        instances = separable_dataset(n_queries=5, n_cands=6, seed=10)
        X = np.array([i.features.as_tuple() for i in instances])
        for lr, bound in ((1e-3, 1e-1), (1e-6, 1e-4)):
            params = Hyperparams(n_trees=1, n_leaves=4, n_bags=1, learning_rate=lr)
            model = train_bagged(instances, params, seed=0)
            assert np.max(np.abs(model.score(X))) < bound


class TestKfold:
    def test_ten_queries_two_per_fold(self):
        qids = [f"q{i}" for i in range(10)]
        folds = assign_folds(qids, 5, seed=0)
        counts = [list(folds.values()).count(f) for f in range(5)]
        assert counts == [2, 2, 2, 2, 2]

    def test_fold_assignment_deterministic_and_seed_dependent(self):
        qids = [f"q{i}" for i in range(20)]
        assert assign_folds(qids, 5, seed=1) == assign_folds(qids, 5, seed=1)
        assert assign_folds(qids, 5, seed=1) != assign_folds(qids, 5, seed=2)

    def test_separable_cv_map_one(self):
        instances = separable_dataset(n_queries=15, n_cands=8, seed=12)
        params = Hyperparams(n_trees=10, n_leaves=4, n_bags=1)
        result = kfold_cv(instances, params, k=5, seed=0)
        assert result.mean_map == pytest.approx(1.0)
        assert len(result.fold_maps) == 5

    def test_shuffled_labels_cv_below_half(self):
        instances = separable_dataset(n_queries=40, n_cands=12, seed=13, shuffle_labels=True)
        params = Hyperparams(n_trees=10, n_leaves=4, n_bags=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = kfold_cv(instances, params, k=5, seed=0)
        assert result.mean_map < 0.5

    def test_too_few_queries_rejected(self):
        instances = separable_dataset(n_queries=3, n_cands=5)
        with pytest.raises(ValueError):
            kfold_cv(instances, Hyperparams(n_trees=2, n_bags=1), k=5)


class TestGridSearch:
    def test_singleton_grid(self):
        instances = separable_dataset(n_queries=8, n_cands=5, seed=14)
        point = Hyperparams(n_trees=5, n_leaves=3, n_bags=1)
        best, table = grid_search(instances, [point], k=4, seed=0)
        assert best == point
        assert len(table) == 1
        assert isinstance(table[0][1], CvResult)

    def test_table_rows_equal_grid_cardinality(self):
        instances = separable_dataset(n_queries=8, n_cands=5, seed=15)
        grid = [
            Hyperparams(n_trees=t, n_leaves=v, n_bags=1)
            for t in (2, 4) for v in (3, 5)
        ]
        _, table = grid_search(instances, grid, k=4, seed=0)
        assert len(table) == 4

    def test_ties_prefer_fewer_trees_then_leaves(self):
        instances = separable_dataset(n_queries=8, n_cands=5, seed=16)
        grid = [
            Hyperparams(n_trees=20, n_leaves=5, n_bags=1),
            Hyperparams(n_trees=5, n_leaves=8, n_bags=1),
            Hyperparams(n_trees=5, n_leaves=3, n_bags=1),
        ]
        best, table = grid_search(instances, grid, k=4, seed=0)
        assert all(r[1].mean_map == 1.0 for r in table)  # all separable-perfect
        assert best == Hyperparams(n_trees=5, n_leaves=3, n_bags=1)

    def test_default_grid_axes(self):
        grid = default_grid()
        assert len(grid) == 81
        assert {p.n_leaves for p in grid} == {5, 10, 20}
        assert {p.n_bags for p in grid} == {1, 4, 8}
        assert {p.n_trees for p in grid} == {50, 100, 300}
        assert {p.min_leaf_support for p in grid} == {1, 5, 10}

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            grid_search([], [], k=2)


class TestFilteredQuerySet:
    def _candidates_with_results(self, encoder):
        claim_text = "crowd dumped ballots near the river dock"
        good = CandidateQuery(claim_id="c", terms=frozenset({"dumped", "ballots"}))
        bad = CandidateQuery(claim_id="c", terms=frozenset({"weather", "report"}))
        good_results = [
            make_tweet(f"g{i}", f"crowd dumped ballots river dock witness {i}", created_at=i)
            for i in range(6)
        ]
        bad_results = [
            make_tweet(f"b{i}", f"sunny weather report smiles {i}", created_at=i)
            for i in range(6)
        ]
        return claim_text, {good: good_results, bad: bad_results}, good, bad

    def test_dissimilar_candidate_dropped(self, encoder):
        claim_text, results, good, bad = self._candidates_with_results(encoder)
        fqs = build_filtered_query_set(claim_text, results, encoder, k=6)
        assert good in fqs.retained
        assert bad not in fqs.retained

    def test_candidate_sharing_top_tweet_retained(self, encoder):
        claim_text, results, good, bad = self._candidates_with_results(encoder)
        shared = results[good][0]
        other = CandidateQuery(claim_id="c", terms=frozenset({"dumped", "river"}))
        results[other] = [shared]
        fqs = build_filtered_query_set(claim_text, results, encoder, k=3)
        assert good in fqs.retained and other in fqs.retained

    def test_k_at_least_pool_retains_all_result_bearing(self, encoder):
        claim_text, results, good, bad = self._candidates_with_results(encoder)
        empty = CandidateQuery(claim_id="c", terms=frozenset({"nothing", "matches"}))
        results[empty] = []
        fqs = build_filtered_query_set(claim_text, results, encoder, k=100)
        assert set(fqs.retained) == {good, bad}

    def test_monotone_in_k(self, encoder):
        claim_text, results, good, bad = self._candidates_with_results(encoder)
        previous = set()
        for k in (1, 2, 4, 8, 12):
            retained = set(
                c.sorted_terms()
                for c in build_filtered_query_set(claim_text, results, encoder, k=k).retained
            )
            assert previous <= retained
            previous = retained

    def test_empty_pool_warns(self, encoder):
        cand = CandidateQuery(claim_id="c", terms=frozenset({"a", "b"}))
        with pytest.warns(UserWarning):
            fqs = build_filtered_query_set("claim text", {cand: []}, encoder, k=5)
        assert fqs.retained == []

    def test_bad_k(self, encoder):
        with pytest.raises(ValueError):
            build_filtered_query_set("text", {}, encoder, k=0)


class TestModelPersistence:
    def test_round_trip_scores_exact(self, tmp_path):
        instances = separable_dataset(n_queries=10, n_cands=6, seed=17)
        params = Hyperparams(n_trees=10, n_leaves=5, n_bags=3, query_subsample=0.8)
        model = train_bagged(instances, params, seed=1)
        path = tmp_path / "model.lamltr"
        save_model(model, str(path))
        loaded = load_model(str(path))
        probes = separable_dataset(n_queries=10, n_cands=10, seed=18)
        X = np.array([i.features.as_tuple() for i in probes])
        assert np.array_equal(model.score(X), loaded.score(X))
        assert loaded.config_hash == model.config_hash
        assert loaded.feature_version == model.feature_version

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.lamltr"
        path.write_text("LAMLTR1\n{definitely not json")
        with pytest.raises(PersistenceError):
            load_model(str(path))

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bad2.lamltr"
        path.write_text("WRONG\n{}")
        with pytest.raises(PersistenceError):
            load_model(str(path))

    def test_out_of_range_feature_rejected(self, tmp_path):
        instances = separable_dataset(n_queries=6, n_cands=5, seed=19)
        params = Hyperparams(n_trees=2, n_leaves=3, n_bags=1)
        model = train_bagged(instances, params, seed=0)
        path = tmp_path / "tampered.lamltr"
        save_model(model, str(path))
        import json

        lines = path.read_text().splitlines()
        payload = json.loads(lines[1])
        payload["bags"][0]["trees"][0]["feature"][0] = 99
        path.write_text(lines[0] + "\n" + json.dumps(payload))
        with pytest.raises(PersistenceError):
            load_model(str(path))


class TestLetor:
    def test_round_trip(self, tmp_path):
        instances = separable_dataset(n_queries=5, n_cands=4, seed=20)
        path = tmp_path / "train.letor"
        write_letor(instances, str(path))
        loaded = read_letor(str(path))
        assert len(loaded) == len(instances)
        for a, b in zip(instances, loaded):
            assert a.query_id == b.query_id
            assert a.relevance == b.relevance
            assert a.candidate.terms == b.candidate.terms
            assert a.features == b.features

    def test_line_format(self, tmp_path):
        inst = instance("claim7", "x", [3.0] + [0.5] * 10, 1)
        path = tmp_path / "one.letor"
        write_letor([inst], str(path))
        line = path.read_text().strip()
        assert line.startswith("1 qid:claim7 1:3 2:0.5")
        assert line.endswith("# otherx termx")

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.letor"
        path.write_text("not a letor line at all\n")
        with pytest.raises(ValueError):
            read_letor(str(path))


class TestGridSearchOnRetrievalFeatures:
    def test_small_grid_over_benchmark_instances(self):
        """Grid search on real retrieval-driven features, not synthetics."""
        from lambretta.benchmark import make_benchmark
        from lambretta.embedding import EmbeddingCache, HashingEncoder
        from lambretta.pipeline import build_training_instances

        bench = make_benchmark(n_claims=12, n_background=250, seed=21)
        enc = EmbeddingCache(HashingEncoder(dim=128))
        annotated = [(bc.claim, bc.gt_terms) for bc in bench.claims]
        instances, _ = build_training_instances(annotated, bench.corpus, enc, k=20)
        grid = [
            Hyperparams(n_trees=10, n_leaves=4, n_bags=1),
            Hyperparams(n_trees=20, n_leaves=4, n_bags=1),
            Hyperparams(n_trees=10, n_leaves=8, n_bags=2, query_subsample=0.8),
        ]
        best, table = grid_search(instances, grid, k=3, seed=0)
        assert len(table) == 3
        assert best in grid
        best_map = max(r[1].mean_map for r in table)
        assert next(r[1].mean_map for r in table if r[0] == best) == best_map
