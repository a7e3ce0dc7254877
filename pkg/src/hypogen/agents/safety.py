"""Safety guard: goal intake screening, per-hypothesis screening, and
direction monitoring over the latest research overview.

Goal screening fails closed (an undecidable review is retried); direction
monitoring fails open with a logged warning, since it is advisory. Every
decision carries a reasoning trace and is persisted to the event log.
"""

from __future__ import annotations

import re
from enum import Enum

from pydantic import BaseModel, ConfigDict, field_validator

from ..core import Hypothesis, ResearchGoal
from ..errors import EmptyCompletion
from ..gateway import AgentKind, Backend, ModelRequest


class SafetySubject(str, Enum):
    GOAL = "goal"
    HYPOTHESIS = "hypothesis"
    DIRECTION = "direction"


class SafetyVerdict(str, Enum):
    APPROVED = "approved"
    REJECTED = "rejected"


class SafetyDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    subject: SafetySubject
    verdict: SafetyVerdict
    reasoning: str
    reviewed_at: str = ""
    subject_id: str = ""

    @field_validator("reasoning")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("safety decisions must carry a reasoning trace")
        return v


_VERDICT_RE = re.compile(r"verdict\s*:\s*(approved|rejected)", re.IGNORECASE)
_REASONING_RE = re.compile(
    r"reasoning\s*:[ \t]*(.*?)(?=\n\s*verdict\s*:|\Z)", re.IGNORECASE | re.DOTALL
)


def _parse_decision(
    text: str, subject: SafetySubject, reviewed_at: str, subject_id: str
) -> SafetyDecision:
    verdict_match = None
    for m in _VERDICT_RE.finditer(text):
        verdict_match = m
    if verdict_match is None:
        raise EmptyCompletion("safety review produced no verdict")
    reasoning_match = _REASONING_RE.search(text)
    reasoning = reasoning_match.group(1).strip() if reasoning_match else ""
    return SafetyDecision(
        subject=subject,
        verdict=SafetyVerdict(verdict_match.group(1).lower()),
        reasoning=reasoning,
        reviewed_at=reviewed_at,
        subject_id=subject_id,
    )


def review_goal_safety(
    goal: ResearchGoal, gateway: Backend, *, reviewed_at: str = ""
) -> tuple[SafetyDecision, int]:
    """Screen a research goal at intake; rejection terminates the session."""
    request = ModelRequest(
        agent_kind=AgentKind.SAFETY,
        template_id="safety_goal",
        bindings={"goal": goal.goal_text},
    )
    response = gateway.complete(request)
    return _parse_decision(response.text, SafetySubject.GOAL, reviewed_at, "goal"), 1


def review_hypothesis_safety(
    hypothesis: Hypothesis, gateway: Backend, *, goal: str, reviewed_at: str = ""
) -> tuple[SafetyDecision, int]:
    """Screen a hypothesis before tournament entry; rejection excludes it."""
    request = ModelRequest(
        agent_kind=AgentKind.SAFETY,
        template_id="safety_hypothesis",
        bindings={"goal": goal, "hypothesis": hypothesis.content},
    )
    response = gateway.complete(request)
    return (
        _parse_decision(
            response.text, SafetySubject.HYPOTHESIS, reviewed_at, hypothesis.id
        ),
        1,
    )


def monitor_directions(
    overview_body: str, gateway: Backend, *, goal: str, reviewed_at: str = "", overview_id: str = ""
) -> tuple[SafetyDecision, int]:
    """Screen the latest overview; rejection only raises a user alert."""
    if not overview_body.strip():
        raise ValueError("direction monitoring requires an overview")
    request = ModelRequest(
        agent_kind=AgentKind.SAFETY,
        template_id="safety_direction",
        bindings={"goal": goal, "overview": overview_body},
    )
    response = gateway.complete(request)
    return (
        _parse_decision(
            response.text, SafetySubject.DIRECTION, reviewed_at, overview_id
        ),
        1,
    )
