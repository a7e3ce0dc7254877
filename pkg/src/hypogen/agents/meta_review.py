"""Meta review: critique synthesis, research overview, research contacts.

The synthesized critique is the engine's feedback loop: the orchestrator
appends it to downstream generation and reflection prompts, which is how
the system improves without any weight updates.
"""

from __future__ import annotations

import re
from typing import Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core import Hypothesis, Review, ReviewVerdict, TournamentMatch
from ..errors import EmptyCompletion, OverviewUnparseable
from ..gateway import AgentKind, Backend, ModelRequest


class MetaCritique(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: int
    body: str
    source_review_ids: tuple[str, ...] = ()
    source_match_ids: tuple[str, ...] = ()
    created_at: str = ""

    @field_validator("body")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("critique body must be non-empty")
        return v


class OverviewArea(BaseModel):
    model_config = ConfigDict(frozen=True)

    title: str
    rationale: str = ""
    example_topics: tuple[str, ...] = ()
    suggested_experiments: tuple[str, ...] = ()


class ResearchOverview(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: int
    areas: tuple[OverviewArea, ...] = ()
    top_hypothesis_refs: tuple[str, ...] = ()
    body: str = ""
    warning_flags: tuple[str, ...] = ()


class ResearchContact(BaseModel):
    model_config = ConfigDict(frozen=True)

    name_or_redacted: str
    rationale: str
    related_area: str = ""

    @field_validator("rationale")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("contact rationale must be non-empty")
        return v


def synthesize_meta_critique(
    reviews: Sequence[Review],
    match_transcripts: Sequence[str],
    gateway: Backend,
    *,
    goal: str,
    preferences: str,
    instructions: str = "",
    version: int,
    created_at: str = "",
    window: int = 40,
    source_match_ids: Sequence[str] = (),
) -> tuple[MetaCritique, int]:
    """Synthesize recurring critique patterns from recent reviews and debates."""
    if not reviews:
        raise ValueError("meta critique needs at least one review")
    recent = list(reviews)[-window:]
    blocks = [
        f"[review {r.id} kind={r.kind.value} verdict={r.verdict.value}]\n{r.body}"
        for r in recent
    ]
    for i, transcript in enumerate(list(match_transcripts)[-window:]):
        blocks.append(f"[debate {i}]\n{transcript}")
    request = ModelRequest(
        agent_kind=AgentKind.META_REVIEW,
        template_id="meta_review",
        bindings={
            "goal": goal,
            "preferences": preferences,
            "instructions": instructions,
            "reviews": "\n\n".join(blocks),
        },
    )
    response = gateway.complete(request)
    if not response.text.strip():
        raise EmptyCompletion("meta review returned no text")
    critique = MetaCritique(
        version=version,
        body=response.text.strip(),
        source_review_ids=tuple(r.id for r in recent),
        source_match_ids=tuple(source_match_ids),
        created_at=created_at,
    )
    return critique, 1


_AREA_RE = re.compile(r"(?m)^area\s*:\s*(.+)$", re.IGNORECASE)


def _split_items(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(";") if part.strip())


def parse_overview_areas(text: str) -> list[OverviewArea]:
    areas: list[OverviewArea] = []
    current: Optional[dict] = None
    for line in text.splitlines():
        stripped = line.strip()
        lowered = stripped.lower()
        if lowered.startswith("area:"):
            if current:
                areas.append(OverviewArea(**current))
            current = {"title": stripped.split(":", 1)[1].strip()}
        elif current is not None and lowered.startswith("rationale:"):
            current["rationale"] = stripped.split(":", 1)[1].strip()
        elif current is not None and lowered.startswith("example topics:"):
            current["example_topics"] = _split_items(stripped.split(":", 1)[1])
        elif current is not None and lowered.startswith("suggested experiments:"):
            current["suggested_experiments"] = _split_items(stripped.split(":", 1)[1])
    if current:
        areas.append(OverviewArea(**current))
    return areas


def generate_research_overview(
    top_hypotheses: Sequence[Hypothesis],
    gateway: Backend,
    *,
    goal: str,
    preferences: str,
    version: int,
) -> tuple[ResearchOverview, int]:
    """Synthesize top-ranked hypotheses into a research overview.

    If the completion has no recognizable area structure the raw text is
    kept with a warning flag rather than discarded.
    """
    if not top_hypotheses:
        raise ValueError("overview needs at least one active hypothesis")
    listing = "\n\n".join(
        f"[{h.id} elo={h.elo:.0f}] {h.summary or h.content[:200]}" for h in top_hypotheses
    )
    request = ModelRequest(
        agent_kind=AgentKind.META_REVIEW,
        template_id="research_overview",
        bindings={"goal": goal, "preferences": preferences, "top_hypotheses": listing},
    )
    response = gateway.complete(request)
    if not response.text.strip():
        raise EmptyCompletion("overview returned no text")
    areas = parse_overview_areas(response.text)
    flags: tuple[str, ...] = ()
    if not areas:
        flags = ("unparseable_overview",)
    overview = ResearchOverview(
        version=version,
        areas=tuple(areas),
        top_hypothesis_refs=tuple(h.id for h in top_hypotheses),
        body=response.text.strip(),
        warning_flags=flags,
    )
    return overview, 1


_CONTACT_RE = re.compile(
    r"contact\s*:\s*(?P<name>[^|]+)\|\s*area\s*:\s*(?P<area>[^|]+)\|\s*rationale\s*:\s*(?P<rationale>.+)",
    re.IGNORECASE,
)


def suggest_research_contacts(
    overview: ResearchOverview,
    gateway: Backend,
    *,
    goal: str,
    redact: bool = False,
) -> tuple[list[ResearchContact], int]:
    """Suggest qualified reviewers per overview area, each with a rationale."""
    request = ModelRequest(
        agent_kind=AgentKind.META_REVIEW,
        template_id="research_contacts",
        bindings={"goal": goal, "overview": overview.body},
    )
    response = gateway.complete(request)
    contacts: list[ResearchContact] = []
    for line in response.text.splitlines():
        match = _CONTACT_RE.search(line)
        if not match:
            continue
        name = match.group("name").strip()
        contacts.append(
            ResearchContact(
                name_or_redacted="[REDACTED]" if redact else name,
                rationale=match.group("rationale").strip(),
                related_area=match.group("area").strip(),
            )
        )
    if not contacts:
        raise EmptyCompletion("no contacts parsed from completion")
    return contacts, 1


def build_tournament_digest(
    matches: Sequence[TournamentMatch],
    gateway: Backend,
    *,
    max_chars: int = 4000,
) -> tuple[str, int]:
    """Summarize win/loss patterns and recurring judge critiques."""
    if not matches:
        raise ValueError("digest needs at least one completed match")
    wins: dict[str, int] = {}
    losses: dict[str, int] = {}
    for m in matches:
        winner = m.hypothesis_a if m.winner.value == "a" else m.hypothesis_b
        loser = m.hypothesis_b if m.winner.value == "a" else m.hypothesis_a
        wins[winner] = wins.get(winner, 0) + 1
        losses[loser] = losses.get(loser, 0) + 1
    lines = []
    for hid in sorted(set(wins) | set(losses)):
        lines.append(f"{hid}: {wins.get(hid, 0)} wins, {losses.get(hid, 0)} losses")
    summary = "\n".join(lines)
    request = ModelRequest(
        agent_kind=AgentKind.META_REVIEW,
        template_id="tournament_digest",
        bindings={"matches_summary": summary},
    )
    response = gateway.complete(request)
    if not response.text.strip():
        raise EmptyCompletion("digest returned no text")
    digest = f"{summary}\n{response.text.strip()}"
    return digest[:max_chars], 1


def review_quality_signal(review: Review) -> int:
    """Rough usefulness signal for windowing; accepts rank above rejects."""
    return 1 if review.verdict == ReviewVerdict.ACCEPT else 0


__all__ = [
    "MetaCritique",
    "OverviewArea",
    "OverviewUnparseable",
    "ResearchContact",
    "ResearchOverview",
    "build_tournament_digest",
    "generate_research_overview",
    "parse_overview_areas",
    "suggest_research_contacts",
    "synthesize_meta_critique",
]
