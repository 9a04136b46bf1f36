"""Command-line interface.

Subcommands follow the pipeline order: ``ingest`` builds an index,
``extract-claims`` distills seed tweets, ``train`` fits the ranker from
annotated keyword sets, ``flag`` produces moderation candidates,
``compare`` and ``evaluate`` write delimited reports with rendered figures,
``benchmark`` materializes the synthetic corpus, and ``serve`` runs the
annotation/review service.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .claims import (
    DEFAULT_THRESHOLD_VALUE,
    ClaimRecord,
    FallbackClaimScorer,
    FallbackPropositionProvider,
    RemoteClaimScorer,
    RemotePropositionProvider,
    ScoreThreshold,
    extract_claims,
)
from .corpus import (
    INDEX_MAGIC,
    IngestConfig,
    ingest_corpus,
    load_index,
    save_index,
    tweet_from_record,
)
from .embedding import EmbeddingCache, HashingEncoder, RemoteEncoder
from .textquery import load_stopwords
from .ltr import Hyperparams, kfold_cv, load_model, save_model, train_bagged, write_letor
from .pipeline import (
    build_training_instances,
    dedupe_keyword_sets,
    derive_keywords,
    flag_candidates,
    read_candidates,
    write_candidates,
    PipelineError,
)


def _load_corpus(path: str):
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
    if head == INDEX_MAGIC:
        return load_index(path)
    corpus, report = ingest_corpus(path)
    if report.errors:
        for line_no, msg in report.errors[:10]:
            print(f"warning: line {line_no}: {msg}", file=sys.stderr)
        print(f"warning: {len(report.errors)} malformed record(s) skipped", file=sys.stderr)
    return corpus


def _load_claims(path: str) -> list[ClaimRecord]:
    claims = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            claims.append(
                ClaimRecord(
                    claim_id=rec["claim_id"],
                    text=rec["text"],
                    source_tweet_ids=tuple(rec.get("source_tweet_ids", ())),
                    score=float(rec.get("score", 1.0)),
                )
            )
    return claims


def _make_encoder(args) -> EmbeddingCache:
    if getattr(args, "encoder_url", None):
        return EmbeddingCache(RemoteEncoder(args.encoder_url, dim=args.encoder_dim))
    return EmbeddingCache(HashingEncoder(dim=args.encoder_dim))


def _add_encoder_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--encoder-url", help="embedding service URL (default: offline hashing encoder)")
    parser.add_argument("--encoder-dim", type=int, default=256, help="embedding dimension")


def cmd_ingest(args) -> int:
    from datetime import datetime, timezone

    def parse_instant(value):
        if value is None:
            return None
        dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())

    stopwords = load_stopwords(args.stopwords_path) if args.stopwords_path else None
    config = IngestConfig(
        window_start=parse_instant(args.window_start),
        window_end=parse_instant(args.window_end),
        stopwords=stopwords,
    )
    corpus, report = ingest_corpus(args.corpus, config)
    for line_no, msg in report.errors:
        print(f"line {line_no}: {msg}", file=sys.stderr)
    save_index(corpus, args.out)
    print(
        f"ingested {report.n_ingested} tweets "
        f"({report.n_duplicates} duplicate ids, {report.n_window_skipped} outside window, "
        f"{len(report.errors)} malformed) -> {args.out}"
    )
    return 0


def cmd_extract_claims(args) -> int:
    tweets = []
    with open(args.tweets, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                tweets.append(tweet_from_record(json.loads(line)))
    provider = (
        RemotePropositionProvider(args.proposition_provider_url)
        if args.proposition_provider_url
        else FallbackPropositionProvider()
    )
    scorer = (
        RemoteClaimScorer(args.claim_scorer_url)
        if args.claim_scorer_url
        else FallbackClaimScorer()
    )
    claims = extract_claims(tweets, provider, scorer, ScoreThreshold(args.threshold))
    with open(args.out, "w", encoding="utf-8") as fh:
        for claim in claims:
            fh.write(
                json.dumps(
                    {
                        "claim_id": claim.claim_id,
                        "text": claim.text,
                        "source_tweet_ids": list(claim.source_tweet_ids),
                        "score": claim.score,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"extracted {len(claims)} claims from {len(tweets)} tweets -> {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = _load_corpus(args.corpus)
    claims = {c.claim_id: c for c in _load_claims(args.claims)}
    with open(args.labels, encoding="utf-8") as fh:
        labels = json.load(fh)
    annotated = []
    for claim_id, terms in sorted(labels.items()):
        if claim_id not in claims:
            print(f"warning: label for unknown claim {claim_id} skipped", file=sys.stderr)
            continue
        annotated.append((claims[claim_id], frozenset(terms)))
    encoder = _make_encoder(args)
    instances, stats = build_training_instances(annotated, corpus, encoder, k=args.k)
    kept = sum(1 for s in stats if s.positive_retained)
    print(f"training instances: {len(instances)} from {len(annotated)} claims "
          f"(positives retained: {kept}/{len(stats)})")
    params = Hyperparams(
        n_trees=args.n_trees,
        n_leaves=args.n_leaves,
        min_leaf_support=args.min_leaf_support,
        n_bags=args.n_bags,
        learning_rate=args.learning_rate,
        query_subsample=args.query_subsample,
    )
    if args.cv:
        result = kfold_cv(instances, params, k=5, seed=args.seed)
        folds = ", ".join(f"{m:.4f}" for m in result.fold_maps)
        print(f"5-fold CV MAP: mean {result.mean_map:.4f} (folds: {folds})")
    model = train_bagged(instances, params, seed=args.seed)
    save_model(model, args.out)
    if args.letor_out:
        write_letor(instances, args.letor_out)
        print(f"wrote LETOR interchange -> {args.letor_out}")
    print(f"model saved -> {args.out}")
    return 0


def cmd_flag(args) -> int:
    corpus = _load_corpus(args.corpus)
    claims = _load_claims(args.claims)
    model = load_model(args.model)
    encoder = _make_encoder(args)
    per_claim = []
    unresolved = 0
    for claim in claims:
        try:
            best = derive_keywords(claim, model, corpus, encoder, k=args.k)
        except PipelineError as exc:
            print(f"warning: {exc}", file=sys.stderr)
            unresolved += 1
            continue
        per_claim.append((claim.claim_id, best.terms))
    unique_sets = dedupe_keyword_sets(per_claim)
    result = flag_candidates(unique_sets, corpus)
    write_candidates(result.candidates, args.out)
    print(
        f"{len(per_claim)} claims resolved ({unresolved} unresolved), "
        f"{len(unique_sets)} unique keyword sets, {result.queries_issued} corpus queries, "
        f"{len(result.candidates)} candidates -> {args.out}"
    )
    return 0


def cmd_compare(args) -> int:
    from .baselines import compare_methods, write_comparison

    corpus = _load_corpus(args.corpus)
    claims = _load_claims(args.claims)
    with open(args.truth, encoding="utf-8") as fh:
        truth = {k: frozenset(v) for k, v in json.load(fh).items()}
    model = load_model(args.model)
    encoder = _make_encoder(args)
    pairs = [(c, truth[c.claim_id]) for c in claims if c.claim_id in truth]
    report = compare_methods(pairs, corpus, encoder, model, k=args.k)
    paths = write_comparison(report, args.out)
    for method, factor in sorted(report.reduction_factors.items()):
        print(f"reduction vs {method}: {factor:.2f}x")
    print(f"wrote {', '.join(paths)}")
    return 0


def cmd_evaluate(args) -> int:
    from .analysis import emit_report

    corpus = _load_corpus(args.corpus)
    candidates = read_candidates(args.candidates)
    paths = emit_report(candidates, corpus, args.out)
    print(f"wrote {', '.join(paths)}")
    return 0


def cmd_benchmark(args) -> int:
    import os

    from .benchmark import make_benchmark, write_benchmark

    os.makedirs(args.out_dir, exist_ok=True)
    bench = make_benchmark(n_claims=args.claims, n_background=args.background, seed=args.seed)
    corpus_path = os.path.join(args.out_dir, "corpus.jsonl")
    claims_path = os.path.join(args.out_dir, "claims.jsonl")
    truth_path = os.path.join(args.out_dir, "ground_truth.json")
    write_benchmark(bench, corpus_path, claims_path, truth_path)
    labels_path = os.path.join(args.out_dir, "labels.json")
    with open(labels_path, "w", encoding="utf-8") as fh:
        json.dump(
            {bc.claim.claim_id: sorted(bc.gt_terms) for bc in bench.claims},
            fh,
            sort_keys=True,
            indent=2,
        )
    print(
        f"benchmark with {len(bench.claims)} claims and {len(bench.corpus)} tweets "
        f"-> {args.out_dir}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ModerationService, create_app

    corpus = _load_corpus(args.corpus)
    claims = _load_claims(args.claims)
    candidates = read_candidates(args.candidates) if args.candidates else None
    encoder = _make_encoder(args)
    service = ModerationService(
        corpus, claims, encoder, candidates=candidates, state_path=args.state
    )
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lambretta")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a searchable index from corpus JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window-start", help="ISO-8601 inclusive lower bound on created_at")
    p.add_argument("--window-end", help="ISO-8601 inclusive upper bound on created_at")
    p.add_argument("--stopwords-path", help="custom stopword list, one token per line")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract-claims", help="distill check-worthy claims from seed tweets")
    p.add_argument("--tweets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_VALUE)
    p.add_argument("--proposition-provider-url")
    p.add_argument("--claim-scorer-url")
    p.set_defaults(func=cmd_extract_claims)

    p = sub.add_parser("train", help="train the keyword ranker from annotated keyword sets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--labels", required=True, help="JSON {claim_id: [positive terms]}")
    p.add_argument("--out", required=True)
    p.add_argument("--letor-out", help="also write instances in LETOR format")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cv", action="store_true", help="report 5-fold CV MAP before training")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--n-leaves", type=int, default=10)
    p.add_argument("--min-leaf-support", type=int, default=1)
    p.add_argument("--n-bags", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--query-subsample", type=float, default=0.8)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("flag", help="flag moderation candidates for claims")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=20)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_flag)

    p = sub.add_parser("compare", help="compare the ranker against baseline methods")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--truth", required=True, help="JSON {claim_id: [relevant tweet ids]}")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=20)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evaluate", help="coverage/pairs/category analyses over candidates")
    p.add_argument("--candidates", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="materialize the synthetic benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--claims", type=int, default=200)
    p.add_argument("--background", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("serve", help="run the annotation/review service")
    p.add_argument("--corpus", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--candidates")
    p.add_argument("--state", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
