"""Reflection agent: the six review types that filter and annotate hypotheses.

The initial review is tool-free by design; the full review grounds itself
in the literature source when one is available and degrades gracefully
(with a recorded warning flag) when it is not.
"""

from __future__ import annotations

import re
from typing import Optional, Sequence

from pydantic import BaseModel, ConfigDict

from ..core import (
    AssumptionJudgment,
    Hypothesis,
    ObservationLabel,
    ResearchPlanConfig,
    Review,
    ReviewKind,
    ReviewVerdict,
)
from ..errors import (
    EmptyCompletion,
    EmptyDecomposition,
    MissingDigest,
    ScoreUnparseable,
    SourceUnavailable,
)
from ..gateway import AgentKind, Backend, ModelRequest, parse_observation_label
from ..literature import LiteratureHit, LiteratureSource

SCORE_NAMES = ("correctness", "quality", "novelty", "safety")

#: Labels ordered by how decisively they settle an observation review.
_LABEL_SEVERITY = (
    ObservationLabel.DISPROVED,
    ObservationLabel.MISSING_PIECE,
    ObservationLabel.OTHER_EXPLANATIONS_MORE_LIKELY,
    ObservationLabel.ALREADY_EXPLAINED,
    ObservationLabel.NEUTRAL,
)


class ReviewRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    hypothesis: Hypothesis
    kind: ReviewKind
    plan: ResearchPlanConfig
    goal: str
    meta_critique: Optional[str] = None
    tournament_digest: Optional[str] = None

    def feedback_block(self) -> str:
        return self.meta_critique or "(none)"


_SCORE_RE = re.compile(
    r"(?m)^\s*(correctness|quality|novelty|safety)\s*:\s*(-?\d+)\s*$", re.IGNORECASE
)
_VERDICT_RE = re.compile(r"(?m)^\s*verdict\s*:\s*(accept|reject)\s*$", re.IGNORECASE)


def parse_scores(text: str) -> dict[str, int]:
    """Extract the four 1..5 scores; anything missing or out of range fails."""
    scores: dict[str, int] = {}
    for match in _SCORE_RE.finditer(text):
        scores[match.group(1).lower()] = int(match.group(2))
    missing = [name for name in SCORE_NAMES if name not in scores]
    if missing:
        raise ScoreUnparseable(f"missing scores: {', '.join(missing)}")
    bad = {k: v for k, v in scores.items() if not 1 <= v <= 5}
    if bad:
        raise ScoreUnparseable(f"scores outside 1..5: {bad}")
    return scores


def parse_verdict_line(text: str) -> Optional[ReviewVerdict]:
    last = None
    for match in _VERDICT_RE.finditer(text):
        last = match
    if last is None:
        return None
    return ReviewVerdict(last.group(1).lower())


def _scored_completion(
    request: ModelRequest, gateway: Backend
) -> tuple[str, dict[str, int], Optional[ReviewVerdict], int]:
    """Run a scored review prompt with one bounded re-prompt on bad scores."""
    calls = 0
    last_error: Optional[ScoreUnparseable] = None
    for attempt in range(2):
        if attempt == 1:
            bindings = dict(request.bindings)
            bindings["feedback"] = (
                bindings.get("feedback", "")
                + "\nRe-prompt: restate the five final lines exactly, scores 1-5."
            )
            request = request.model_copy(update={"bindings": bindings})
        response = gateway.complete(request)
        calls += 1
        try:
            scores = parse_scores(response.text)
        except ScoreUnparseable as exc:
            last_error = exc
            continue
        return response.text, scores, parse_verdict_line(response.text), calls
    raise last_error if last_error else ScoreUnparseable("no scores parsed")


def initial_review(
    req: ReviewRequest,
    gateway: Backend,
    *,
    review_id: str,
    reject_threshold: int = 2,
) -> tuple[Review, int]:
    """Tool-free quick screen; rejects clearly flawed or non-novel hypotheses.

    Rejects when the model says reject or when correctness/quality fall at
    or below the threshold.
    """
    request = ModelRequest(
        agent_kind=AgentKind.REFLECTION,
        template_id="reflection_initial",
        bindings={
            "goal": req.goal,
            "preferences": req.plan.preferences,
            "feedback": req.feedback_block(),
            "hypothesis": req.hypothesis.content,
        },
        trace_id=review_id,
    )
    body, scores, verdict, calls = _scored_completion(request, gateway)
    low = min(scores["correctness"], scores["quality"]) <= reject_threshold
    final = (
        ReviewVerdict.REJECT
        if verdict == ReviewVerdict.REJECT or low
        else ReviewVerdict.ACCEPT
    )
    review = Review(
        id=review_id,
        hypothesis_id=req.hypothesis.id,
        kind=ReviewKind.INITIAL,
        verdict=final,
        body=body,
        scores=scores,
    )
    return review, calls


def full_review(
    req: ReviewRequest,
    gateway: Backend,
    literature: Optional[LiteratureSource],
    *,
    review_id: str,
    hits_limit: int = 3,
) -> tuple[Review, int]:
    """Literature-grounded review with novelty sections and assumptions."""
    warning_flags: tuple[str, ...] = ()
    hits: list[LiteratureHit] = []
    query = req.hypothesis.summary or req.hypothesis.content[:200]
    if literature is None:
        warning_flags = ("literature_unavailable",)
    else:
        try:
            hits = literature.search(query, limit=hits_limit)
        except SourceUnavailable:
            warning_flags = ("literature_unavailable",)
    articles = "\n".join(f"[{h.doc_id}] {h.title}: {h.snippet}" for h in hits) or "(none)"
    request = ModelRequest(
        agent_kind=AgentKind.REFLECTION,
        template_id="reflection_full",
        bindings={
            "goal": req.goal,
            "preferences": req.plan.preferences,
            "feedback": req.feedback_block(),
            "hypothesis": req.hypothesis.content,
            "articles": articles,
        },
        trace_id=review_id,
    )
    body, scores, verdict, calls = _scored_completion(request, gateway)
    review = Review(
        id=review_id,
        hypothesis_id=req.hypothesis.id,
        kind=ReviewKind.FULL,
        verdict=verdict or ReviewVerdict.ACCEPT,
        body=body,
        scores=scores,
        warning_flags=warning_flags,
    )
    return review, calls


_ASSUMPTION_LINE_RE = re.compile(
    r"assumption\s*:\s*(?P<statement>[^|]+)\|\s*valid\s*:\s*(?P<valid>yes|no)\s*"
    r"\|\s*fundamental\s*:\s*(?P<fundamental>yes|no)\s*(?:\|\s*note\s*:\s*(?P<note>.*))?",
    re.IGNORECASE,
)


def deep_verification_review(
    req: ReviewRequest, gateway: Backend, *, review_id: str
) -> tuple[Review, int]:
    """Decompose into assumptions and judge each independently.

    An invalid assumption rejects the hypothesis only when the model calls
    it fundamental.
    """
    response = gateway.complete(
        ModelRequest(
            agent_kind=AgentKind.REFLECTION,
            template_id="reflection_deep_verification",
            bindings={
                "goal": req.goal,
                "feedback": req.feedback_block(),
                "hypothesis": req.hypothesis.content,
            },
            trace_id=review_id,
        )
    )
    judgments: list[AssumptionJudgment] = []
    for match in _ASSUMPTION_LINE_RE.finditer(response.text):
        judgments.append(
            AssumptionJudgment(
                statement=match.group("statement").strip(),
                valid=match.group("valid").lower() == "yes",
                fundamental=match.group("fundamental").lower() == "yes",
                note=(match.group("note") or "").strip(),
            )
        )
    if not judgments:
        raise EmptyDecomposition("deep verification produced no assumptions")
    fatal = any(not j.valid and j.fundamental for j in judgments)
    verdict = parse_verdict_line(response.text)
    final = ReviewVerdict.REJECT if fatal or verdict == ReviewVerdict.REJECT else ReviewVerdict.ACCEPT
    review = Review(
        id=review_id,
        hypothesis_id=req.hypothesis.id,
        kind=ReviewKind.DEEP_VERIFICATION,
        verdict=final,
        body=response.text,
        assumptions=tuple(judgments),
    )
    return review, 1


def observation_review(
    req: ReviewRequest,
    gateway: Backend,
    articles: Sequence[tuple[str, str]],
    *,
    review_id: str,
) -> tuple[Review, Optional[str], int]:
    """Check whether the hypothesis explains long-tail observations.

    Returns the review, plus an annotation to attach alongside the
    hypothesis when any article yields a "missing piece" finding (content
    itself is never mutated).
    """
    if not articles:
        raise ValueError("observation review requires at least one article")
    calls = 0
    labels: list[tuple[str, ObservationLabel]] = []
    sections: list[str] = []
    for doc_id, text in articles:
        response = gateway.complete(
            ModelRequest(
                agent_kind=AgentKind.REFLECTION,
                template_id="reflection_observation",
                bindings={"article": text, "hypothesis": req.hypothesis.content},
                trace_id=review_id,
            )
        )
        calls += 1
        label = parse_observation_label(response.text)
        labels.append((doc_id, label))
        sections.append(f"[{doc_id}] {label.value}\n{response.text}")
    aggregate = next(
        (lab for lab in _LABEL_SEVERITY if any(lab == l for _, l in labels)),
        ObservationLabel.NEUTRAL,
    )
    annotation: Optional[str] = None
    missing = [doc_id for doc_id, label in labels if label == ObservationLabel.MISSING_PIECE]
    if missing:
        annotation = (
            "Observation findings: hypothesis offers a novel explanation for "
            "observations in " + ", ".join(missing)
        )
    review = Review(
        id=review_id,
        hypothesis_id=req.hypothesis.id,
        kind=ReviewKind.OBSERVATION,
        verdict=ReviewVerdict.INFORMATIONAL,
        body="\n\n".join(sections),
        observation_label=aggregate,
    )
    return review, annotation, calls


_FAILURE_RE = re.compile(r"(?m)^\s*failure scenario\s*:\s*(.+)$", re.IGNORECASE)


def simulation_review(
    req: ReviewRequest, gateway: Backend, *, review_id: str
) -> tuple[Review, int]:
    """Step-wise mechanism walk-through listing potential failure scenarios."""
    response = gateway.complete(
        ModelRequest(
            agent_kind=AgentKind.REFLECTION,
            template_id="reflection_simulation",
            bindings={
                "goal": req.goal,
                "feedback": req.feedback_block(),
                "hypothesis": req.hypothesis.content,
            },
            trace_id=review_id,
        )
    )
    if not response.text.strip():
        raise EmptyCompletion("simulation review returned no text")
    failures = [m.group(1).strip() for m in _FAILURE_RE.finditer(response.text)]
    body = response.text
    if failures:
        body += "\n\nIdentified failure scenarios: " + "; ".join(failures)
    review = Review(
        id=review_id,
        hypothesis_id=req.hypothesis.id,
        kind=ReviewKind.SIMULATION,
        verdict=ReviewVerdict.INFORMATIONAL,
        body=body,
    )
    return review, 1


def tournament_recurrent_review(
    req: ReviewRequest, gateway: Backend, *, review_id: str
) -> tuple[Review, int]:
    """Re-review conditioned on the tournament digest of recurring issues."""
    digest = (req.tournament_digest or "").strip()
    if not digest:
        raise MissingDigest("recurrent review requires a tournament digest")
    response = gateway.complete(
        ModelRequest(
            agent_kind=AgentKind.REFLECTION,
            template_id="reflection_recurrent",
            bindings={
                "goal": req.goal,
                "feedback": req.feedback_block(),
                "digest": digest,
                "hypothesis": req.hypothesis.content,
            },
            trace_id=review_id,
        )
    )
    if not response.text.strip():
        raise EmptyCompletion("recurrent review returned no text")
    digest_items = [line.strip() for line in digest.splitlines() if line.strip()]
    referenced = any(
        item and item.rstrip(".").lower() in response.text.lower()
        for item in digest_items
    )
    review = Review(
        id=review_id,
        hypothesis_id=req.hypothesis.id,
        kind=ReviewKind.TOURNAMENT_RECURRENT,
        verdict=ReviewVerdict.INFORMATIONAL,
        body=response.text,
        warning_flags=() if referenced else ("digest_not_referenced",),
    )
    return review, 1
