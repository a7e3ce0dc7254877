"""Core domain types: hypotheses, reviews, matches, lifecycle, Elo buckets.

All types are immutable value objects (frozen pydantic models). Mutation
happens only in the orchestrator's state keeper, which produces new
versions via ``model_copy``. That makes them safe to share across workers.
"""

from __future__ import annotations

import hashlib
import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import IllegalTransition, NonFiniteRating

INITIAL_ELO = 1200.0
ELO_BUCKET_WIDTH = 50.0
ELO_BUCKET_FLOOR = 1000.0


class HypothesisOrigin(str, Enum):
    GENERATED_LITERATURE = "generated_literature"
    GENERATED_DEBATE = "generated_debate"
    GENERATED_ASSUMPTIONS = "generated_assumptions"
    GENERATED_EXPANSION = "generated_expansion"
    EVOLVED = "evolved"
    COMBINED = "combined"
    EXPERT_CONTRIBUTED = "expert_contributed"


#: Origins whose hypotheses are created from scratch (no parents).
ROOT_ORIGINS = frozenset(
    {
        HypothesisOrigin.GENERATED_LITERATURE,
        HypothesisOrigin.GENERATED_DEBATE,
        HypothesisOrigin.GENERATED_ASSUMPTIONS,
        HypothesisOrigin.GENERATED_EXPANSION,
        HypothesisOrigin.EXPERT_CONTRIBUTED,
    }
)


class HypothesisState(str, Enum):
    DRAFT = "draft"
    UNDER_INITIAL_REVIEW = "under_initial_review"
    REJECTED_INITIAL = "rejected_initial"
    UNDER_FULL_REVIEW = "under_full_review"
    ACTIVE_IN_TOURNAMENT = "active_in_tournament"
    EXCLUDED_UNSAFE = "excluded_unsafe"
    RETIRED = "retired"


class LifecycleEvent(str, Enum):
    BEGIN_INITIAL_REVIEW = "begin_initial_review"
    INITIAL_REVIEW_FAILED = "initial_review_failed"
    INITIAL_REVIEW_PASSED = "initial_review_passed"
    RE_REVIEW = "re_review"
    ADMITTED_TO_TOURNAMENT = "admitted_to_tournament"
    FLAGGED_UNSAFE = "flagged_unsafe"
    RETIRE = "retire"


# Lifecycle graph. Acyclic except the under_full_review self loop; no path
# re-enters draft. Terminal states (rejected_initial, retired) have no
# outgoing edges.
_TRANSITIONS: dict[tuple[HypothesisState, LifecycleEvent], HypothesisState] = {
    (HypothesisState.DRAFT, LifecycleEvent.BEGIN_INITIAL_REVIEW): HypothesisState.UNDER_INITIAL_REVIEW,
    (HypothesisState.UNDER_INITIAL_REVIEW, LifecycleEvent.INITIAL_REVIEW_FAILED): HypothesisState.REJECTED_INITIAL,
    (HypothesisState.UNDER_INITIAL_REVIEW, LifecycleEvent.INITIAL_REVIEW_PASSED): HypothesisState.UNDER_FULL_REVIEW,
    (HypothesisState.UNDER_INITIAL_REVIEW, LifecycleEvent.FLAGGED_UNSAFE): HypothesisState.EXCLUDED_UNSAFE,
    (HypothesisState.UNDER_FULL_REVIEW, LifecycleEvent.RE_REVIEW): HypothesisState.UNDER_FULL_REVIEW,
    (HypothesisState.UNDER_FULL_REVIEW, LifecycleEvent.ADMITTED_TO_TOURNAMENT): HypothesisState.ACTIVE_IN_TOURNAMENT,
    (HypothesisState.UNDER_FULL_REVIEW, LifecycleEvent.FLAGGED_UNSAFE): HypothesisState.EXCLUDED_UNSAFE,
    (HypothesisState.ACTIVE_IN_TOURNAMENT, LifecycleEvent.RETIRE): HypothesisState.RETIRED,
    (HypothesisState.EXCLUDED_UNSAFE, LifecycleEvent.RETIRE): HypothesisState.RETIRED,
}

#: States a hypothesis may still leave on its way into the tournament.
PRE_TOURNAMENT_STATES = frozenset(
    {HypothesisState.UNDER_INITIAL_REVIEW, HypothesisState.UNDER_FULL_REVIEW}
)


def transition_hypothesis_state(
    state: HypothesisState, event: LifecycleEvent
) -> HypothesisState:
    """Return the successor state for a lifecycle event.

    Raises IllegalTransition for edges not in the lifecycle graph; the
    caller's state is left untouched (this is a pure function).
    """
    try:
        return _TRANSITIONS[(state, event)]
    except KeyError:
        raise IllegalTransition(state.value, event.value) from None


class ReviewKind(str, Enum):
    INITIAL = "initial"
    FULL = "full"
    DEEP_VERIFICATION = "deep_verification"
    OBSERVATION = "observation"
    SIMULATION = "simulation"
    TOURNAMENT_RECURRENT = "tournament_recurrent"
    EXPERT = "expert"


class ReviewVerdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    FLAG_UNSAFE = "flag_unsafe"
    INFORMATIONAL = "informational"


class ObservationLabel(str, Enum):
    ALREADY_EXPLAINED = "already_explained"
    OTHER_EXPLANATIONS_MORE_LIKELY = "other_explanations_more_likely"
    MISSING_PIECE = "missing_piece"
    NEUTRAL = "neutral"
    DISPROVED = "disproved"


class MatchMode(str, Enum):
    MULTI_TURN_DEBATE = "multi_turn_debate"
    SINGLE_TURN = "single_turn"


class MatchWinner(str, Enum):
    A = "a"
    B = "b"


class ResearchGoal(BaseModel):
    """The scientist's natural-language objective that seeds a session."""

    model_config = ConfigDict(frozen=True)

    goal_text: str
    attachments: tuple[str, ...] = ()
    submitted_at: str = ""

    @field_validator("goal_text")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("goal_text must be non-empty")
        return v


class EvaluationCriterion(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    rubric: str = ""

    @field_validator("name")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("criterion name must be non-empty")
        return v


class ResearchPlanConfig(BaseModel):
    """Parsed research goal: preferences, attributes, constraints, criteria."""

    model_config = ConfigDict(frozen=True)

    preferences: str = ""
    attributes: tuple[str, ...] = ()
    constraints: tuple[str, ...] = ()
    evaluation_criteria: tuple[EvaluationCriterion, ...] = ()
    output_format: Optional[str] = None
    version: int = 1

    @field_validator("attributes")
    @classmethod
    def _dedupe(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        seen: list[str] = []
        for item in v:
            if item not in seen:
                seen.append(item)
        return tuple(seen)

    def idea_attributes(self) -> str:
        """Render the attribute tags for prompt binding."""
        return ", ".join(self.attributes) if self.attributes else "novel"


class AssumptionJudgment(BaseModel):
    """One assumption examined during a review."""

    model_config = ConfigDict(frozen=True)

    statement: str
    valid: bool = True
    fundamental: bool = False
    note: str = ""


class Review(BaseModel):
    """A typed critique of a hypothesis."""

    model_config = ConfigDict(frozen=True)

    id: str
    hypothesis_id: str
    kind: ReviewKind
    verdict: ReviewVerdict
    body: str = ""
    scores: dict[str, int] = Field(default_factory=dict)
    assumptions: tuple[AssumptionJudgment, ...] = ()
    observation_label: Optional[ObservationLabel] = None
    warning_flags: tuple[str, ...] = ()
    author: str = "agent"

    @field_validator("scores")
    @classmethod
    def _scores_in_range(cls, v: dict[str, int]) -> dict[str, int]:
        for name, score in v.items():
            if not 1 <= score <= 5:
                raise ValueError(f"score {name}={score} outside 1..5")
        return v

    def model_post_init(self, __context: object) -> None:
        has_label = self.observation_label is not None
        if has_label != (self.kind == ReviewKind.OBSERVATION):
            raise ValueError("observation_label present iff kind is observation")


class Hypothesis(BaseModel):
    """A candidate research proposal competing in the tournament.

    ``content`` is immutable for the hypothesis's whole lifetime; evolution
    creates descendants instead of editing parents. ``content_hash`` is kept
    for de-duplication, not identity.
    """

    model_config = ConfigDict(frozen=True)

    id: str
    session_id: str
    content: str
    summary: str = ""
    category: str = ""
    origin: HypothesisOrigin
    parent_ids: tuple[str, ...] = ()
    elo: float = INITIAL_ELO
    state: HypothesisState = HypothesisState.DRAFT
    reviews: tuple[str, ...] = ()
    created_seq: int = 0
    content_hash: str = ""
    provenance_tag: str = ""

    def model_post_init(self, __context: object) -> None:
        root = self.origin in ROOT_ORIGINS
        if root and self.parent_ids:
            raise ValueError(f"origin {self.origin.value} must not carry parent_ids")
        if not root and not self.parent_ids:
            raise ValueError(f"origin {self.origin.value} requires parent_ids")

    @classmethod
    def create(
        cls,
        *,
        id: str,
        session_id: str,
        content: str,
        origin: HypothesisOrigin,
        created_seq: int,
        summary: str = "",
        category: str = "",
        parent_ids: tuple[str, ...] = (),
        provenance_tag: str = "",
    ) -> "Hypothesis":
        """Build a fresh hypothesis: state draft, Elo exactly 1200."""
        return cls(
            id=id,
            session_id=session_id,
            content=content,
            summary=summary,
            category=category,
            origin=origin,
            parent_ids=parent_ids,
            elo=INITIAL_ELO,
            state=HypothesisState.DRAFT,
            created_seq=created_seq,
            content_hash=content_fingerprint(content),
            provenance_tag=provenance_tag,
        )


def content_fingerprint(content: str) -> str:
    return hashlib.sha256(content.encode("utf-8")).hexdigest()[:16]


class TournamentMatch(BaseModel):
    """One completed pairwise comparison and its Elo consequences."""

    model_config = ConfigDict(frozen=True)

    id: str
    hypothesis_a: str
    hypothesis_b: str
    mode: MatchMode
    transcript: str = ""
    winner: MatchWinner
    elo_before: tuple[float, float]
    elo_after: tuple[float, float]
    scheduled_reason: str = ""

    def model_post_init(self, __context: object) -> None:
        if self.hypothesis_a == self.hypothesis_b:
            raise ValueError("a match requires two distinct hypotheses")


class EloBucket(BaseModel):
    """A 50-point Elo bucket, half-open below and inclusive above.

    The floor bucket collects every rating at or below 1000, matching the
    convention that labelled buckets start at 1001.
    """

    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float
    label: str

    def contains(self, rating: float) -> bool:
        if math.isinf(self.lower):
            return rating <= self.upper
        return self.lower < rating <= self.upper


FLOOR_BUCKET = EloBucket(lower=float("-inf"), upper=ELO_BUCKET_FLOOR, label="≤1000")


def elo_bucket_of(rating: float) -> EloBucket:
    """Map a rating to its bucket: (1000,1050] -> "1001–1050", etc."""
    if not math.isfinite(rating):
        raise NonFiniteRating(f"rating {rating!r} is not finite")
    if rating <= ELO_BUCKET_FLOOR:
        return FLOOR_BUCKET
    index = math.ceil((rating - ELO_BUCKET_FLOOR) / ELO_BUCKET_WIDTH)
    lower = ELO_BUCKET_FLOOR + ELO_BUCKET_WIDTH * (index - 1)
    upper = ELO_BUCKET_FLOOR + ELO_BUCKET_WIDTH * index
    return EloBucket(lower=lower, upper=upper, label=f"{int(lower) + 1}–{int(upper)}")


class SessionStats(BaseModel):
    """Summary statistics the supervisor computes periodically."""

    model_config = ConfigDict(frozen=True)

    hypotheses_total: int = 0
    hypotheses_unreviewed: int = 0
    hypotheses_active: int = 0
    matches_played: int = 0
    per_origin_win_rate: dict[str, float] = Field(default_factory=dict)
    top_k_mean_elo: Optional[float] = None
    best_elo: Optional[float] = None
    tasks_pending: int = 0

    @field_validator(
        "hypotheses_total", "hypotheses_unreviewed", "hypotheses_active", "matches_played", "tasks_pending"
    )
    @classmethod
    def _non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("counts must be non-negative")
        return v

    @field_validator("per_origin_win_rate")
    @classmethod
    def _rates_in_unit(cls, v: dict[str, float]) -> dict[str, float]:
        for origin, rate in v.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"win rate {origin}={rate} outside [0,1]")
        return v
