"""Human-in-the-loop service: keyword annotation sessions and candidate review.

Annotators refine a claim's keyword set against live hit counts and
20-post samples, then finalize into a ground-truth label plus ranking
instances. Reviewers label flagged candidates with the seven-category
taxonomy. State persists to a single JSON file (append-only audit log
included); the HTTP layer is a thin FastAPI wrapper over the service
object and authenticates with a bearer token from ``LAMBRETTA_TOKEN``.

No postponed annotations here: the HTTP handlers are nested functions and
the framework must resolve their type hints at runtime.
"""

import json
import os
import random
from dataclasses import dataclass, field, replace

from .claims import ClaimRecord, PropositionProvider
from .corpus import Corpus, Tweet, search_all_terms
from .features import compute_feature_matrix
from .ltr import RankingInstance
from .pipeline import CATEGORIES, ModerationCandidate, candidate_from_record, candidate_to_record
from .textquery import CandidateQuery, generate_candidates, normalize, split_sentences

__all__ = [
    "HistoryEvent",
    "AnnotationSession",
    "GroundTruthLabel",
    "NotFoundError",
    "SessionStateError",
    "ModerationService",
    "seed_base_keywords",
    "create_app",
]

STATE_VERSION = 1


class NotFoundError(KeyError):
    pass


class SessionStateError(Exception):
    """An operation conflicts with the session/candidate lifecycle."""


@dataclass
class HistoryEvent:
    action: str  # seed | add | remove
    term: str
    resulting_hit_count: int
    sample_shown: tuple[str, ...] = ()


@dataclass
class AnnotationSession:
    session_id: str
    claim_id: str
    current_terms: frozenset[str]
    history: list[HistoryEvent] = field(default_factory=list)
    status: str = "open"  # open | finalized | abandoned

    def replay_terms(self) -> frozenset[str]:
        """Fold the history over the seed; must equal current_terms."""
        terms: set[str] = set()
        for event in self.history:
            if event.action == "seed":
                terms = set(event.term.split())
            elif event.action == "add":
                terms.add(event.term)
            elif event.action == "remove":
                terms.discard(event.term)
        return frozenset(terms)


@dataclass(frozen=True)
class GroundTruthLabel:
    claim_id: str
    positive_terms: frozenset[str]
    negative_candidates: tuple[frozenset[str], ...]

    def __post_init__(self):
        if self.positive_terms in self.negative_candidates:
            raise ValueError("positive terms cannot also be a negative candidate")


def seed_base_keywords(
    claim: ClaimRecord,
    provider: PropositionProvider | None = None,
    stopwords: frozenset[str] | None = None,
) -> frozenset[str]:
    """Two-word starting query: first and last non-numeric content tokens.

    When a proposition provider is supplied, the tokens come from the first
    proposition it extracts (its subject/object ends); otherwise from the
    claim text itself. The annotator may override the seed at session start.
    """
    text = claim.text
    if provider is not None:
        for sentence in split_sentences(claim.text):
            props = provider.extract(sentence)
            if props:
                text = props[0]
                break
    tokens = [t for t in normalize(text, stopwords).tokens if not t.replace(".", "").isdigit()]
    distinct = list(dict.fromkeys(tokens))
    if len(distinct) < 2:
        raise ValueError(f"claim {claim.claim_id}: needs at least 2 content tokens to seed")
    return frozenset({distinct[0], distinct[-1]})


class ModerationService:
    """Owns sessions, candidates, labels, and the audit log."""

    def __init__(
        self,
        corpus: Corpus,
        claims: list[ClaimRecord],
        encoder,
        candidates: list[ModerationCandidate] | None = None,
        state_path: str | None = None,
        proposition_provider: PropositionProvider | None = None,
    ):
        self.corpus = corpus
        self.encoder = encoder
        self.claims = {c.claim_id: c for c in claims}
        self.provider = proposition_provider
        self.sessions: dict[str, AnnotationSession] = {}
        self.candidates: dict[str, ModerationCandidate] = {}
        self.labels: dict[str, GroundTruthLabel] = {}
        self.instances: list[RankingInstance] = []
        self.audit: list[dict] = []
        self._next_session = 1
        self.state_path = state_path
        for cand in candidates or []:
            self.candidates[cand.candidate_id] = cand
        if state_path and os.path.exists(state_path):
            self._load_state(state_path)

    # --- session lifecycle ---

    def _claim(self, claim_id: str) -> ClaimRecord:
        claim = self.claims.get(claim_id)
        if claim is None:
            raise NotFoundError(f"unknown claim {claim_id}")
        return claim

    def _session(self, session_id: str) -> AnnotationSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id}")
        return session

    def _hit_count(self, terms: frozenset[str]) -> int:
        if not terms:
            return 0
        return len(search_all_terms(self.corpus, terms))

    def create_session(
        self, claim_id: str, seed_terms: frozenset[str] | None = None
    ) -> AnnotationSession:
        claim = self._claim(claim_id)
        seed = frozenset(seed_terms) if seed_terms else seed_base_keywords(
            claim, self.provider, self.corpus.stopwords
        )
        if not seed:
            raise ValueError("seed terms must be non-empty")
        session_id = f"s{self._next_session}"
        self._next_session += 1
        hit_count = self._hit_count(seed)
        session = AnnotationSession(
            session_id=session_id,
            claim_id=claim_id,
            current_terms=seed,
            history=[HistoryEvent("seed", " ".join(sorted(seed)), hit_count)],
        )
        self.sessions[session_id] = session
        self._audit("session_created", session_id=session_id, claim_id=claim_id,
                    seed=sorted(seed))
        self._persist()
        return session

    def sample_results(self, session_id: str, n: int = 20, seed: int = 0) -> list[Tweet]:
        """Uniform sample (without replacement) of the current query's hits.

        Fewer hits than ``n`` returns them all. The sampled ids are recorded
        on the latest history event so the audit trail shows what the
        annotator saw.
        """
        session = self._session(session_id)
        if session.status != "open":
            raise SessionStateError(f"session {session_id} is {session.status}")
        hits = search_all_terms(self.corpus, session.current_terms)
        if len(hits) <= n:
            sample = list(hits)
        else:
            sample = random.Random(seed).sample(hits, n)
        session.history[-1].sample_shown = tuple(t.id for t in sample)
        self._persist()
        return sample

    def apply_edit(self, session_id: str, action: str, term: str) -> AnnotationSession:
        session = self._session(session_id)
        if session.status != "open":
            raise SessionStateError(f"cannot edit a {session.status} session")
        if action not in ("add", "remove"):
            raise ValueError(f"unknown edit action {action!r}")
        term = term.strip().lower()
        if not term:
            raise ValueError("edit term must be non-empty")
        if action == "add":
            terms = session.current_terms | {term}
        else:
            if term not in session.current_terms:
                raise ValueError(f"term {term!r} is not in the current query")
            terms = session.current_terms - {term}
            if not terms:
                raise ValueError("cannot remove the last remaining term")
        session.current_terms = frozenset(terms)
        hit_count = self._hit_count(session.current_terms)
        session.history.append(HistoryEvent(action, term, hit_count))
        self._audit("session_edit", session_id=session_id, action=action, term=term,
                    hit_count=hit_count)
        self._persist()
        return session

    def finalize_session(self, session_id: str) -> tuple[GroundTruthLabel, list[RankingInstance]]:
        """Close the session into a ground-truth label plus ranking instances.

        The final set must hold 2-5 terms (the candidate-query bound) and
        retrieve at least one tweet. The positive instance is the final
        set; all other generated candidates of the claim become negatives.
        """
        session = self._session(session_id)
        if session.status != "open":
            raise SessionStateError(f"session {session_id} already {session.status}")
        terms = session.current_terms
        if not 2 <= len(terms) <= 5:
            raise ValueError(
                f"final keyword set must hold 2-5 terms (candidate-query bound), got {len(terms)}"
            )
        hits = self._hit_count(terms)
        if hits == 0:
            raise ValueError("final keyword set retrieves nothing; refine before finalizing")
        claim = self._claim(session.claim_id)
        tokens = normalize(claim.text, self.corpus.stopwords)
        generated = generate_candidates(claim.claim_id, tokens)
        negatives = tuple(c.terms for c in generated if c.terms != terms)
        label = GroundTruthLabel(
            claim_id=claim.claim_id, positive_terms=terms, negative_candidates=negatives
        )
        candidates = [c for c in generated if c.terms != terms]
        positive = next((c for c in generated if c.terms == terms), None)
        if positive is None:
            positive = CandidateQuery(claim_id=claim.claim_id, terms=terms, origin="annotated")
        all_cands = [positive] + candidates
        feats = compute_feature_matrix(claim.text, tokens, all_cands, self.corpus, self.encoder)
        instances = [
            RankingInstance(
                query_id=claim.claim_id,
                candidate=cand,
                features=feats[cand],
                relevance=1 if cand.terms == terms else 0,
            )
            for cand in all_cands
        ]
        session.status = "finalized"
        self.labels[claim.claim_id] = label  # last finalize wins
        self.instances.extend(instances)
        self._audit("session_finalized", session_id=session_id, claim_id=claim.claim_id,
                    positive=sorted(terms), hit_count=hits)
        self._persist()
        return label, instances

    # --- candidate review ---

    def add_candidates(self, candidates: list[ModerationCandidate]) -> int:
        added = 0
        for cand in candidates:
            if cand.candidate_id not in self.candidates:
                self.candidates[cand.candidate_id] = cand
                added += 1
        self._persist()
        return added

    def list_candidates(
        self, claim_id: str | None = None, status: str | None = None
    ) -> list[ModerationCandidate]:
        out = [
            c
            for c in self.candidates.values()
            if (claim_id is None or c.claim_id == claim_id)
            and (status is None or c.status == status)
        ]
        out.sort(key=lambda c: (c.claim_id, c.tweet_id))
        return out

    def record_decision(
        self, candidate_id: str, categories: set[str], decision: str
    ) -> ModerationCandidate:
        cand = self.candidates.get(candidate_id)
        if cand is None:
            raise NotFoundError(f"unknown candidate {candidate_id}")
        if cand.status != "pending":
            raise SessionStateError(f"candidate {candidate_id} already {cand.status}")
        if decision not in ("approve_label", "dismiss"):
            raise ValueError(f"unknown decision {decision!r}")
        categories = frozenset(categories)
        unknown = categories - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown categories {sorted(unknown)}")
        if decision == "approve_label":
            if not categories:
                raise ValueError("approve_label requires at least one category")
            updated = replace(cand, status="labeled", categories=categories)
        else:
            updated = replace(cand, status="dismissed", categories=frozenset())
        self.candidates[candidate_id] = updated
        self._audit("decision", candidate_id=candidate_id, decision=decision,
                    categories=sorted(categories))
        self._persist()
        return updated

    def coverage_report(self) -> dict:
        """Per-claim review progress plus category tallies and FP count."""
        per_claim: dict[str, dict] = {}
        category_counts = {c: 0 for c in CATEGORIES}
        false_positives = 0
        for cand in self.candidates.values():
            row = per_claim.setdefault(
                cand.claim_id,
                {"claim_id": cand.claim_id, "flagged": 0, "pending": 0, "labeled": 0,
                 "dismissed": 0, "moderated": 0},
            )
            row["flagged"] += 1
            row[cand.status] += 1
            if cand.tweet_id in self.corpus.by_id and self.corpus.get(cand.tweet_id).is_moderated:
                row["moderated"] += 1
            for cat in cand.categories:
                category_counts[cat] += 1
            if cand.status == "labeled" and cand.categories == {"irrelevant"}:
                false_positives += 1
        decisions = sum(1 for c in self.candidates.values() if c.status != "pending")
        return {
            "claims": sorted(per_claim.values(), key=lambda r: r["claim_id"]),
            "categories": category_counts,
            "false_positives": false_positives,
            "decisions": decisions,
        }

    # --- persistence ---

    def _audit(self, event: str, **data) -> None:
        self.audit.append({"event": event, **data})

    def _persist(self) -> None:
        if not self.state_path:
            return
        payload = {
            "version": STATE_VERSION,
            "next_session": self._next_session,
            "sessions": [
                {
                    "session_id": s.session_id,
                    "claim_id": s.claim_id,
                    "current_terms": sorted(s.current_terms),
                    "status": s.status,
                    "history": [
                        {
                            "action": e.action,
                            "term": e.term,
                            "resulting_hit_count": e.resulting_hit_count,
                            "sample_shown": list(e.sample_shown),
                        }
                        for e in s.history
                    ],
                }
                for s in self.sessions.values()
            ],
            "candidates": [candidate_to_record(c) for c in self.list_candidates()],
            "labels": [
                {
                    "claim_id": lb.claim_id,
                    "positive_terms": sorted(lb.positive_terms),
                    "negative_candidates": [sorted(n) for n in lb.negative_candidates],
                }
                for lb in self.labels.values()
            ],
            "audit": self.audit,
        }
        tmp = self.state_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
        os.replace(tmp, self.state_path)

    def _load_state(self, path: str) -> None:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != STATE_VERSION:
            raise ValueError(f"{path}: unsupported state version")
        self._next_session = payload["next_session"]
        for rec in payload["sessions"]:
            session = AnnotationSession(
                session_id=rec["session_id"],
                claim_id=rec["claim_id"],
                current_terms=frozenset(rec["current_terms"]),
                history=[
                    HistoryEvent(
                        action=e["action"],
                        term=e["term"],
                        resulting_hit_count=e["resulting_hit_count"],
                        sample_shown=tuple(e["sample_shown"]),
                    )
                    for e in rec["history"]
                ],
                status=rec["status"],
            )
            if session.replay_terms() != session.current_terms:
                raise ValueError(f"session {session.session_id}: history replay mismatch")
            self.sessions[session.session_id] = session
        for rec in payload["candidates"]:
            cand = candidate_from_record(rec)
            self.candidates[cand.candidate_id] = cand
        for rec in payload["labels"]:
            self.labels[rec["claim_id"]] = GroundTruthLabel(
                claim_id=rec["claim_id"],
                positive_terms=frozenset(rec["positive_terms"]),
                negative_candidates=tuple(frozenset(n) for n in rec["negative_candidates"]),
            )
        self.audit = payload["audit"]


# --- HTTP layer -----------------------------------------------------------------

def _session_view(session: AnnotationSession) -> dict:
    return {
        "session_id": session.session_id,
        "claim_id": session.claim_id,
        "current_terms": sorted(session.current_terms),
        "status": session.status,
        "hit_count": session.history[-1].resulting_hit_count if session.history else 0,
        "history": [
            {
                "action": e.action,
                "term": e.term,
                "resulting_hit_count": e.resulting_hit_count,
                "sample_shown": list(e.sample_shown),
            }
            for e in session.history
        ],
    }


def create_app(service: ModerationService):
    """FastAPI app over the service; bearer auth via LAMBRETTA_TOKEN."""
    from fastapi import Depends, FastAPI, HTTPException, Request
    from pydantic import BaseModel

    app = FastAPI(title="lambretta moderation service")

    def authorized(request: Request) -> None:
        token = os.environ.get("LAMBRETTA_TOKEN")
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    class SessionRequest(BaseModel):
        claim_id: str
        seed_terms: list[str] | None = None

    class EditRequest(BaseModel):
        action: str
        term: str

    class DecisionRequest(BaseModel):
        categories: list[str]
        decision: str

    def run(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except SessionStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/claims")
    def get_claims(_=Depends(authorized)):
        return [
            {
                "claim_id": c.claim_id,
                "text": c.text,
                "score": c.score,
                "source_tweet_ids": list(c.source_tweet_ids),
            }
            for c in sorted(service.claims.values(), key=lambda c: c.claim_id)
        ]

    @app.post("/sessions")
    def post_session(req: SessionRequest, _=Depends(authorized)):
        seed = frozenset(req.seed_terms) if req.seed_terms else None
        session = run(service.create_session, req.claim_id, seed)
        return _session_view(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str, _=Depends(authorized)):
        return _session_view(run(service._session, session_id))

    @app.get("/sessions/{session_id}/sample")
    def get_sample(session_id: str, n: int = 20, seed: int = 0, _=Depends(authorized)):
        sample = run(service.sample_results, session_id, n, seed)
        session = service._session(session_id)
        return {
            "tweet_ids": [t.id for t in sample],
            "tweets": [{"id": t.id, "text": t.text} for t in sample],
            "hit_count": session.history[-1].resulting_hit_count,
        }

    @app.post("/sessions/{session_id}/edits")
    def post_edit(session_id: str, req: EditRequest, _=Depends(authorized)):
        return _session_view(run(service.apply_edit, session_id, req.action, req.term))

    @app.post("/sessions/{session_id}/finalize")
    def post_finalize(session_id: str, _=Depends(authorized)):
        label, instances = run(service.finalize_session, session_id)
        return {
            "claim_id": label.claim_id,
            "positive_terms": sorted(label.positive_terms),
            "negative_candidates": [sorted(n) for n in label.negative_candidates],
            "instances": len(instances),
        }

    @app.get("/candidates")
    def get_candidates(claim_id: str | None = None, status: str | None = None,
                       _=Depends(authorized)):
        out = []
        for c in service.list_candidates(claim_id, status):
            record = candidate_to_record(c)
            # reviewers need the tweet body; the console never fetches it elsewhere
            record["text"] = (
                service.corpus.get(c.tweet_id).text if c.tweet_id in service.corpus.by_id else ""
            )
            out.append(record)
        return out

    @app.post("/candidates/{candidate_id}/decision")
    def post_decision(candidate_id: str, req: DecisionRequest, _=Depends(authorized)):
        cand = run(service.record_decision, candidate_id, set(req.categories), req.decision)
        return candidate_to_record(cand)

    @app.get("/reports/coverage")
    def get_coverage(_=Depends(authorized)):
        return service.coverage_report()

    return app
