"""Learning-to-rank for keyword selection: bagged LambdaMART over 11 features.

The ranker is a bagging ensemble of gradient-boosted regression trees
trained on lambda gradients. Lambdas come from pairwise swaps weighted by
|delta-AP| (relevance is binary, and MAP is the evaluation metric), leaf
outputs take one Newton step over accumulated lambdas and hessians, and
bags resample query ids. Everything is deterministic under a fixed seed.

Training data interchange uses LETOR-style lines::

    <relevance> qid:<id> 1:<f1> ... 11:<f11> # <candidate terms>

Model files are text containers with magic header ``LAMLTR1``.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import PersistenceError, Tweet
from .embedding import cosine
from .features import FEATURE_NAMES, FEATURE_VERSION, FeatureVector
from .textquery import CandidateQuery

__all__ = [
    "RankingInstance",
    "Hyperparams",
    "RegressionTree",
    "BoostedEnsemble",
    "RankingModel",
    "FilteredQuerySet",
    "TrainingError",
    "build_filtered_query_set",
    "train_lambdamart",
    "train_bagged",
    "rank",
    "average_precision",
    "map_score",
    "kfold_cv",
    "grid_search",
    "default_grid",
    "save_model",
    "load_model",
    "write_letor",
    "read_letor",
]

MODEL_MAGIC = "LAMLTR1"
N_FEATURES = len(FEATURE_NAMES)


class TrainingError(Exception):
    """The training set cannot support rank learning."""


@dataclass(frozen=True)
class RankingInstance:
    """One (claim, candidate) pair with its features and binary relevance."""

    query_id: str
    candidate: CandidateQuery
    features: FeatureVector
    relevance: int

    def __post_init__(self):
        if self.relevance not in (0, 1):
            raise ValueError("relevance judgements are binary")


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    n_leaves: int = 10
    min_leaf_support: int = 1
    n_bags: int = 4
    learning_rate: float = 0.1
    query_subsample: float = 1.0

    def __post_init__(self):
        if min(self.n_trees, self.n_leaves, self.min_leaf_support, self.n_bags) < 1:
            raise ValueError("tree/leaf/support/bag counts must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.query_subsample <= 1.0:
            raise ValueError("query_subsample must lie in (0, 1]")


@dataclass
class RegressionTree:
    """Array-encoded binary tree; feature == -1 marks a leaf."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[float]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(len(X))
        if not len(X):
            return out
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            mask = X[idx, self.feature[node]] <= self.threshold[node]
            if mask.any():
                stack.append((self.left[node], idx[mask]))
            if (~mask).any():
                stack.append((self.right[node], idx[~mask]))
        return out

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)


@dataclass
class BoostedEnsemble:
    trees: list[RegressionTree]
    learning_rate: float

    def score(self, X: np.ndarray) -> np.ndarray:
        total = np.zeros(len(X))
        for tree in self.trees:
            total += self.learning_rate * tree.predict(X)
        return total


@dataclass
class RankingModel:
    """Bagged LambdaMART: prediction is the mean score across bags."""

    bags: list[BoostedEnsemble]
    params: Hyperparams
    feature_version: str = FEATURE_VERSION
    config_hash: str = ""

    def score(self, X: np.ndarray) -> np.ndarray:
        if not self.bags:
            raise ValueError("model has no bags")
        return np.mean([bag.score(X) for bag in self.bags], axis=0)


# --- pre-ranking filter -------------------------------------------------------

@dataclass
class FilteredQuerySet:
    """Candidates that contribute to the top-k claim-similar pooled results."""

    retained: list[CandidateQuery]
    top_results: list[Tweet]


def build_filtered_query_set(
    claim_text: str,
    results_by_candidate: dict[CandidateQuery, list[Tweet]],
    encoder,
    k: int = 20,
) -> FilteredQuerySet:
    """Pool every candidate's results, rank by claim similarity, keep top k.

    A candidate survives iff at least one of its retrieved tweets lands in
    the pooled top k. Candidate order is preserved; ranking ties break on
    tweet id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    claim_vec = encoder.encode(claim_text)
    pool: dict[str, Tweet] = {}
    contributors: dict[str, set[int]] = {}
    candidates = list(results_by_candidate)
    for ci, cand in enumerate(candidates):
        for tweet in results_by_candidate[cand]:
            pool[tweet.id] = tweet
            contributors.setdefault(tweet.id, set()).add(ci)
    if not pool:
        warnings.warn("no candidate retrieved any result; FilteredQuerySet is empty")
        return FilteredQuerySet(retained=[], top_results=[])
    ranked = sorted(
        pool.values(),
        key=lambda t: (-cosine(encoder.encode(t.text), claim_vec), t.id),
    )
    top = ranked[:k]
    kept_ci: set[int] = set()
    for tweet in top:
        kept_ci.update(contributors[tweet.id])
    retained = [candidates[ci] for ci in sorted(kept_ci)]
    return FilteredQuerySet(retained=retained, top_results=top)


# --- lambda gradients ---------------------------------------------------------

def _query_lambdas(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lambdas and hessians for one query from |delta-AP|-weighted swaps."""
    n = len(labels)
    lambdas = np.zeros(n)
    weights = np.zeros(n)
    n_rel = int(labels.sum())
    if n_rel == 0 or n_rel == n:
        return lambdas, weights
    order = np.argsort(-scores, kind="stable")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    ranked = labels[order].astype(np.float64)
    prefix_rel = np.cumsum(ranked)
    recip = ranked / (np.arange(n) + 1.0)
    prefix_recip = np.cumsum(recip)

    rel_idx = np.flatnonzero(labels == 1)
    non_idx = np.flatnonzero(labels == 0)
    pi = pos[rel_idx][:, None]
    pj = pos[non_idx][None, :]
    a = np.minimum(pi, pj)
    b = np.maximum(pi, pj)
    between = prefix_recip[b - 1] - prefix_recip[a]
    ranks_a = a + 1.0
    ranks_b = b + 1.0
    # swapping the relevant item down vs. up changes AP by:
    delta_down = prefix_rel[b] / ranks_b - prefix_rel[a] / ranks_a - between
    delta_up = (prefix_rel[a] + 1.0) / ranks_a - prefix_rel[b] / ranks_b + between
    delta_ap = np.abs(np.where(pi < pj, delta_down, delta_up)) / n_rel

    sdiff = np.clip(scores[rel_idx][:, None] - scores[non_idx][None, :], -50.0, 50.0)
    rho = 1.0 / (1.0 + np.exp(sdiff))
    lam = rho * delta_ap
    hess = rho * (1.0 - rho) * delta_ap
    lambdas[rel_idx] += lam.sum(axis=1)
    lambdas[non_idx] -= lam.sum(axis=0)
    weights[rel_idx] += hess.sum(axis=1)
    weights[non_idx] += hess.sum(axis=0)
    return lambdas, weights


# --- regression tree fitting --------------------------------------------------

def _best_split(X, lam, idx, min_support):
    """Best (gain, feature, threshold, left_idx, right_idx) for one node."""
    n = len(idx)
    if n < 2 * min_support:
        return None
    total = lam[idx].sum()
    base = total * total / n
    best = None
    for f in range(X.shape[1]):
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        vs = vals[order]
        prefix = np.cumsum(lam[idx][order])
        cuts = np.flatnonzero(vs[:-1] < vs[1:])
        if min_support > 1:
            cuts = cuts[(cuts + 1 >= min_support) & (n - cuts - 1 >= min_support)]
        if not len(cuts):
            continue
        left_sum = prefix[cuts]
        left_n = cuts + 1.0
        gains = left_sum**2 / left_n + (total - left_sum) ** 2 / (n - left_n) - base
        ci = int(np.argmax(gains))
        gain = float(gains[ci])
        if gain <= 1e-12:
            continue
        if best is None or gain > best[0] + 1e-15:
            cut = cuts[ci]
            thr = (vs[cut] + vs[cut + 1]) / 2.0
            # partition by the threshold itself so training and prediction
            # agree even when the midpoint rounds onto a sample value
            mask = vals <= thr
            n_left = int(mask.sum())
            if n_left < min_support or n - n_left < min_support or n_left in (0, n):
                continue
            best = (gain, f, thr, idx[mask], idx[~mask])
    return best


def _leaf_value(lam, weights, idx) -> float:
    num = lam[idx].sum()
    den = weights[idx].sum()
    return float(num / (den + 1e-9))


def _fit_tree(X, lam, weights, n_leaves, min_support) -> RegressionTree:
    """Best-first tree on lambda targets with Newton leaf outputs."""
    tree = RegressionTree(feature=[-1], threshold=[0.0], left=[-1], right=[-1],
                          value=[_leaf_value(lam, weights, np.arange(len(X)))])
    open_leaves = {0: np.arange(len(X))}
    splits = {0: _best_split(X, lam, np.arange(len(X)), min_support)}
    leaves = 1
    while leaves < n_leaves:
        candidates = [(s[0], node) for node, s in splits.items() if s is not None]
        if not candidates:
            break
        _, node = max(candidates, key=lambda c: (c[0], -c[1]))
        gain, f, thr, left_idx, right_idx = splits.pop(node)
        del open_leaves[node]
        li = len(tree.feature)
        ri = li + 1
        for child_idx in (left_idx, right_idx):
            tree.feature.append(-1)
            tree.threshold.append(0.0)
            tree.left.append(-1)
            tree.right.append(-1)
            tree.value.append(_leaf_value(lam, weights, child_idx))
        tree.feature[node] = f
        tree.threshold[node] = float(thr)
        tree.left[node] = li
        tree.right[node] = ri
        tree.value[node] = 0.0
        open_leaves[li] = left_idx
        open_leaves[ri] = right_idx
        splits[li] = _best_split(X, lam, left_idx, min_support)
        splits[ri] = _best_split(X, lam, right_idx, min_support)
        leaves += 1
    return tree


# --- training -----------------------------------------------------------------

def _group_by_query(instances: list[RankingInstance]):
    """Instances stacked by sorted query id; returns (X, y, slices, qids)."""
    by_query: dict[str, list[RankingInstance]] = {}
    for inst in instances:
        by_query.setdefault(inst.query_id, []).append(inst)
    qids = sorted(by_query)
    X = np.array(
        [inst.features.as_tuple() for qid in qids for inst in by_query[qid]],
        dtype=np.float64,
    ).reshape(-1, N_FEATURES)
    y = np.array(
        [inst.relevance for qid in qids for inst in by_query[qid]], dtype=np.int64
    )
    slices = []
    start = 0
    for qid in qids:
        end = start + len(by_query[qid])
        slices.append((start, end))
        start = end
    return X, y, slices, qids


def _config_hash(params: Hyperparams, seed: int) -> str:
    blob = json.dumps({"params": asdict(params), "seed": seed}, sort_keys=True)
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


def train_lambdamart(
    instances: list[RankingInstance], params: Hyperparams, seed: int = 0
) -> BoostedEnsemble:
    """Fit one boosted ensemble to lambda gradients.

    Requires at least one query carrying both a relevant and an irrelevant
    instance, otherwise no pair generates a gradient.
    """
    X, y, slices, _ = _group_by_query(instances)
    if not any(0 < y[s:e].sum() < e - s for s, e in slices):
        raise TrainingError("no query has both relevant and irrelevant instances")
    scores = np.zeros(len(X))
    trees = []
    for _ in range(params.n_trees):
        lam = np.zeros(len(X))
        hess = np.zeros(len(X))
        for s, e in slices:
            ql, qw = _query_lambdas(scores[s:e], y[s:e])
            lam[s:e] = ql
            hess[s:e] = qw
        tree = _fit_tree(X, lam, hess, params.n_leaves, params.min_leaf_support)
        scores += params.learning_rate * tree.predict(X)
        trees.append(tree)
    return BoostedEnsemble(trees=trees, learning_rate=params.learning_rate)


def train_bagged(
    instances: list[RankingInstance], params: Hyperparams, seed: int = 0
) -> RankingModel:
    """Train ``n_bags`` ensembles on query-id subsamples; predict by mean.

    Each bag draws ``ceil(query_subsample * n_queries)`` distinct query ids
    without replacement, so a single bag at subsample 1.0 degenerates to
    plain LambdaMART.
    """
    qids = sorted({inst.query_id for inst in instances})
    if not qids:
        raise TrainingError("no instances")
    n_take = max(1, round(params.query_subsample * len(qids)))
    rng = np.random.default_rng(seed)
    bags = []
    for _ in range(params.n_bags):
        if n_take >= len(qids):
            chosen = set(qids)
        else:
            chosen = set(rng.choice(qids, size=n_take, replace=False))
        subset = [inst for inst in instances if inst.query_id in chosen]
        bags.append(train_lambdamart(subset, params, seed=seed))
    return RankingModel(
        bags=bags, params=params, feature_version=FEATURE_VERSION,
        config_hash=_config_hash(params, seed),
    )


# --- inference and evaluation ---------------------------------------------------

def rank(
    model: RankingModel, instances: list[RankingInstance]
) -> list[tuple[RankingInstance, float]]:
    """Order one query's instances by model score, descending.

    Ties break on the candidate's sorted term tuple so equal-scoring
    candidates come back in lexicographic order.
    """
    if model.feature_version != FEATURE_VERSION:
        raise ValueError(
            f"model feature-order version {model.feature_version!r} does not "
            f"match this build ({FEATURE_VERSION!r})"
        )
    if not instances:
        return []
    X = np.array([i.features.as_tuple() for i in instances], dtype=np.float64)
    scores = model.score(X)
    paired = list(zip(instances, scores.tolist()))
    paired.sort(key=lambda p: (-p[1], p[0].candidate.sorted_terms()))
    return paired


def average_precision(relevance: list[int]) -> float:
    """AP of one ranked binary relevance list; 0.0 when nothing is relevant."""
    n_rel = 0
    total = 0.0
    for i, rel in enumerate(relevance):
        if rel:
            n_rel += 1
            total += n_rel / (i + 1)
    return total / n_rel if n_rel else 0.0


def map_score(rankings: list[list[int]]) -> float:
    """Mean AP over queries; relevant-free queries are excluded, with a warning."""
    aps = []
    skipped = 0
    for relevance in rankings:
        if not any(relevance):
            skipped += 1
            continue
        aps.append(average_precision(relevance))
    if skipped:
        warnings.warn(f"excluded {skipped} query(ies) with no relevant instance from MAP")
    if not aps:
        raise ValueError("MAP undefined: no query has a relevant instance")
    return float(np.mean(aps))


def _fold_of(query_id: str, seed: int) -> bytes:
    return hashlib.blake2b(f"{seed}:{query_id}".encode(), digest_size=8).digest()


def assign_folds(qids: list[str], k: int, seed: int) -> dict[str, int]:
    """Deterministic balanced fold assignment: hash-order then round-robin."""
    ordered = sorted(qids, key=lambda q: (_fold_of(q, seed), q))
    return {qid: i % k for i, qid in enumerate(ordered)}


@dataclass
class CvResult:
    fold_maps: list[float]
    mean_map: float
    folds: dict[str, int] = field(default_factory=dict)


def kfold_cv(
    instances: list[RankingInstance],
    params: Hyperparams,
    k: int = 5,
    seed: int = 0,
) -> CvResult:
    """Cross-validate with folds that partition queries, never instances."""
    qids = sorted({inst.query_id for inst in instances})
    if len(qids) < k:
        raise ValueError(f"need at least {k} distinct queries, have {len(qids)}")
    folds = assign_folds(qids, k, seed)
    fold_maps = []
    for fold in range(k):
        train = [i for i in instances if folds[i.query_id] != fold]
        test = [i for i in instances if folds[i.query_id] == fold]
        model = train_bagged(train, params, seed=seed)
        by_query: dict[str, list[RankingInstance]] = {}
        for inst in test:
            by_query.setdefault(inst.query_id, []).append(inst)
        rankings = [
            [inst.relevance for inst, _ in rank(model, group)]
            for _, group in sorted(by_query.items())
        ]
        fold_maps.append(map_score(rankings))
    return CvResult(fold_maps=fold_maps, mean_map=float(np.mean(fold_maps)), folds=folds)


def default_grid() -> list[Hyperparams]:
    """The four-axis default grid: leaves, bags, trees, minimum leaf support."""
    grid = []
    for n_leaves in (5, 10, 20):
        for n_bags in (1, 4, 8):
            for n_trees in (50, 100, 300):
                for min_leaf_support in (1, 5, 10):
                    grid.append(
                        Hyperparams(
                            n_trees=n_trees,
                            n_leaves=n_leaves,
                            min_leaf_support=min_leaf_support,
                            n_bags=n_bags,
                        )
                    )
    return grid


def grid_search(
    instances: list[RankingInstance],
    grid: list[Hyperparams] | None = None,
    k: int = 5,
    seed: int = 0,
) -> tuple[Hyperparams, list[tuple[Hyperparams, CvResult]]]:
    """Exhaustive CV over the grid; ties prefer fewer trees, then fewer leaves."""
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    table = [(params, kfold_cv(instances, params, k=k, seed=seed)) for params in grid]
    best = max(
        table,
        key=lambda row: (row[1].mean_map, -row[0].n_trees, -row[0].n_leaves),
    )
    return best[0], table


# --- persistence ----------------------------------------------------------------

def save_model(model: RankingModel, path: str) -> None:
    payload = {
        "version": 1,
        "feature_version": model.feature_version,
        "config_hash": model.config_hash,
        "params": asdict(model.params),
        "bags": [
            {
                "learning_rate": bag.learning_rate,
                "trees": [
                    {
                        "feature": t.feature,
                        "threshold": t.threshold,
                        "left": t.left,
                        "right": t.right,
                        "value": t.value,
                    }
                    for t in bag.trees
                ],
            }
            for bag in model.bags
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_MAGIC + "\n")
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str) -> RankingModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != MODEL_MAGIC:
            raise PersistenceError(f"{path}: expected header {MODEL_MAGIC!r}, found {header!r}")
        body = fh.read()
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"{path}: corrupt model body: {exc}") from exc
    if payload.get("version") != 1:
        raise PersistenceError(f"{path}: unsupported model version {payload.get('version')!r}")
    try:
        bags = [
            BoostedEnsemble(
                learning_rate=float(bag["learning_rate"]),
                trees=[
                    RegressionTree(
                        feature=[int(v) for v in t["feature"]],
                        threshold=[float(v) for v in t["threshold"]],
                        left=[int(v) for v in t["left"]],
                        right=[int(v) for v in t["right"]],
                        value=[float(v) for v in t["value"]],
                    )
                    for t in bag["trees"]
                ],
            )
            for bag in payload["bags"]
        ]
        params = Hyperparams(**payload["params"])
        model = RankingModel(
            bags=bags,
            params=params,
            feature_version=payload["feature_version"],
            config_hash=payload["config_hash"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"{path}: malformed model payload: {exc}") from exc
    for bag in model.bags:
        for tree in bag.trees:
            if any(f >= N_FEATURES for f in tree.feature):
                raise PersistenceError(f"{path}: split feature index out of range")
    return model


# --- LETOR-style interchange ------------------------------------------------------

def write_letor(instances: list[RankingInstance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            feats = " ".join(
                f"{i + 1}:{value!r}" for i, value in enumerate(inst.features.as_tuple())
            )
            terms = " ".join(inst.candidate.sorted_terms())
            fh.write(f"{inst.relevance} qid:{inst.query_id} {feats} # {terms}\n")


def read_letor(path: str) -> list[RankingInstance]:
    instances = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                body, _, comment = line.partition("#")
                parts = body.split()
                relevance = int(parts[0])
                if not parts[1].startswith("qid:"):
                    raise ValueError("missing qid")
                qid = parts[1][4:]
                values = [0.0] * N_FEATURES
                for chunk in parts[2:]:
                    idx, _, val = chunk.partition(":")
                    values[int(idx) - 1] = float(val)
                terms = frozenset(comment.split())
                fv = FeatureVector(hits=int(values[0]), **dict(zip(FEATURE_NAMES[1:], values[1:])))
                instances.append(
                    RankingInstance(
                        query_id=qid,
                        candidate=CandidateQuery(claim_id=qid, terms=terms),
                        features=fv,
                        relevance=relevance,
                    )
                )
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{line_no}: malformed LETOR line: {exc}") from exc
    return instances
