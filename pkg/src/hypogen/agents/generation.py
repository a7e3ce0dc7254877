"""Hypothesis generation via literature exploration, simulated debate,
assumption chains, and research expansion.

Ops return lightweight proposals; the orchestrator assigns ids, sequence
numbers, and lifecycle state when it turns them into store events.
"""

from __future__ import annotations

import re
from typing import Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

from ..core import HypothesisOrigin, ResearchPlanConfig
from ..errors import DebateUnrecoverable, EmptyCompletion, MissingOverview
from ..gateway import (
    AgentKind,
    Backend,
    DebateSignal,
    MAX_DEBATE_TURNS,
    ModelRequest,
    parse_debate_outcome,
)
from ..literature import LiteratureSource


class GenerationContext(BaseModel):
    model_config = ConfigDict(frozen=True)

    plan: ResearchPlanConfig
    goal: str
    meta_critique: Optional[str] = None
    overview: Optional[str] = None
    existing_summaries: tuple[tuple[str, str], ...] = ()
    instructions: str = ""

    def instructions_block(self) -> str:
        """Base instructions plus the meta critique as one verbatim block."""
        parts = [self.instructions] if self.instructions else []
        if self.meta_critique:
            parts.append("Meta-review feedback:\n" + self.meta_critique)
        return "\n\n".join(parts)


class AssumptionChain(BaseModel):
    model_config = ConfigDict(frozen=True)

    root_goal: str
    assumptions: tuple[tuple[str, tuple[str, ...]], ...]

    def rendered(self) -> str:
        lines = []
        for i, (statement, subs) in enumerate(self.assumptions, start=1):
            lines.append(f"{i}. {statement}")
            lines.extend(f"   - {sub}" for sub in subs)
        return "\n".join(lines)


class HypothesisProposal(BaseModel):
    model_config = ConfigDict(frozen=True)

    content: str
    summary: str = ""
    category: str = ""
    origin: HypothesisOrigin
    parent_ids: tuple[str, ...] = ()


def _first_sentence(text: str) -> str:
    stripped = text.strip()
    for end in (". ", ".\n"):
        idx = stripped.find(end)
        if idx > 0:
            return stripped[: idx + 1]
    return stripped.splitlines()[0][:160] if stripped else ""


_SUMMARY_RE = re.compile(r"(?m)^summary\s*:\s*(.+)$", re.IGNORECASE)
_CATEGORY_RE = re.compile(r"(?m)^category\s*:\s*(.+)$", re.IGNORECASE)


def summarize(content: str, gateway: Backend) -> tuple[str, str, int]:
    """One structured completion for summary and category, with fallback."""
    request = ModelRequest(
        agent_kind=AgentKind.GENERATION,
        template_id="summarize_hypothesis",
        bindings={"hypothesis": content},
    )
    response = gateway.complete(request)
    summary_match = _SUMMARY_RE.search(response.text)
    category_match = _CATEGORY_RE.search(response.text)
    summary = summary_match.group(1).strip() if summary_match else _first_sentence(content)
    category = category_match.group(1).strip() if category_match else ""
    return summary, category, 1


def _proposal(
    content: str, origin: HypothesisOrigin, gateway: Backend, category: str = ""
) -> tuple[HypothesisProposal, int]:
    summary, inferred_category, calls = summarize(content, gateway)
    return (
        HypothesisProposal(
            content=content,
            summary=summary,
            category=category or inferred_category,
            origin=origin,
        ),
        calls,
    )


def generate_from_literature(
    ctx: GenerationContext,
    gateway: Backend,
    literature: Optional[LiteratureSource],
    *,
    count: int = 1,
    max_iterations: int = 3,
    hits_per_iteration: int = 3,
    trace_id: str = "",
) -> tuple[list[HypothesisProposal], int]:
    """Search, read, and summarize articles, then formulate hypotheses.

    With no literature source or an empty corpus the articles section is
    simply empty and generation still proceeds.
    """
    calls = 0
    article_blocks: list[str] = []
    query = ctx.goal
    for iteration in range(max_iterations):
        if literature is None:
            break
        hits = literature.search(query, limit=hits_per_iteration)
        if not hits:
            break
        for hit in hits:
            block = f"[{hit.doc_id}] {hit.title}: {hit.snippet}"
            if block not in article_blocks:
                article_blocks.append(block)
        # Refine the next query with retrieved titles, most recent first.
        query = f"{ctx.goal} {hits[0].title}"

    articles_text = "\n".join(reversed(article_blocks)) if article_blocks else "(no articles)"
    proposals: list[HypothesisProposal] = []
    for index in range(count):
        instructions = ctx.instructions_block()
        if count > 1:
            distinct = f"Proposal {index + 1} of {count}; make it distinct from the previous ones."
            instructions = f"{instructions}\n\n{distinct}" if instructions else distinct
        request = ModelRequest(
            agent_kind=AgentKind.GENERATION,
            template_id="generation_literature",
            bindings={
                "goal": ctx.goal,
                "preferences": ctx.plan.preferences,
                "source_hypothesis": "",
                "instructions": instructions,
                "articles_with_reasoning": articles_text,
            },
            trace_id=f"{trace_id}/{index}" if trace_id else "",
        )
        response = gateway.complete(request)
        calls += 1
        if not response.text.strip():
            raise EmptyCompletion("literature generation returned no text")
        proposal, extra = _proposal(
            response.text.strip(), HypothesisOrigin.GENERATED_LITERATURE, gateway
        )
        calls += extra
        proposals.append(proposal)
    return proposals, calls


def generate_via_debate(
    ctx: GenerationContext, gateway: Backend, *, trace_id: str = ""
) -> tuple[HypothesisProposal, int, int]:
    """Self-play debate in one growing transcript; returns (proposal, calls, turns)."""
    calls = 0
    transcript = ""
    reviews_overview = "\n".join(
        f"- {summary}" for _, summary in ctx.existing_summaries[:10]
    ) or "(none yet)"
    turns = 0
    final_text: Optional[str] = None
    while turns < MAX_DEBATE_TURNS:
        request = ModelRequest(
            agent_kind=AgentKind.GENERATION,
            template_id="generation_debate",
            bindings={
                "idea_attributes": ctx.plan.idea_attributes(),
                "goal": ctx.goal,
                "preferences": ctx.plan.preferences,
                "instructions": ctx.instructions_block(),
                "reviews_overview": reviews_overview,
                "transcript": transcript,
            },
            max_turns_hint=MAX_DEBATE_TURNS,
            trace_id=trace_id,
        )
        response = gateway.complete(request)
        calls += 1
        turns += 1
        transcript += f"Turn {turns}:\n{response.text}\n"
        outcome = parse_debate_outcome(transcript, turns)
        if isinstance(outcome, str):
            final_text = outcome
            break
        if outcome is DebateSignal.EXHAUSTED:
            break

    if final_text is None:
        fallback = gateway.complete(
            ModelRequest(
                agent_kind=AgentKind.GENERATION,
                template_id="debate_finalize",
                bindings={"transcript": transcript},
                trace_id=trace_id,
            )
        )
        calls += 1
        if not fallback.text.strip():
            raise DebateUnrecoverable("debate fallback produced no text")
        final_text = fallback.text.strip()

    proposal, extra = _proposal(final_text, HypothesisOrigin.GENERATED_DEBATE, gateway)
    return proposal, calls + extra, turns


_ASSUMPTION_RE = re.compile(r"(?m)^\s*\d+\.\s*(.+)$")
_SUB_ASSUMPTION_RE = re.compile(r"(?m)^\s+-\s*(.+)$")


def parse_assumption_chain(text: str, root_goal: str) -> AssumptionChain:
    assumptions: list[tuple[str, tuple[str, ...]]] = []
    current: Optional[str] = None
    subs: list[str] = []
    for line in text.splitlines():
        top = re.match(r"^\s*\d+\.\s*(.+)$", line)
        sub = re.match(r"^\s+-\s*(.+)$", line)
        if top:
            if current is not None:
                assumptions.append((current, tuple(subs)))
            current = top.group(1).strip()
            subs = []
        elif sub and current is not None:
            subs.append(sub.group(1).strip())
    if current is not None:
        assumptions.append((current, tuple(subs)))
    return AssumptionChain(root_goal=root_goal, assumptions=tuple(assumptions))


def generate_via_assumptions(
    ctx: GenerationContext, gateway: Backend, *, trace_id: str = ""
) -> tuple[list[HypothesisProposal], int]:
    """Elicit testable intermediate assumptions, then aggregate them."""
    calls = 0
    chain_response = gateway.complete(
        ModelRequest(
            agent_kind=AgentKind.GENERATION,
            template_id="generation_assumptions_chain",
            bindings={
                "goal": ctx.goal,
                "preferences": ctx.plan.preferences,
                "instructions": ctx.instructions_block(),
            },
            trace_id=trace_id,
        )
    )
    calls += 1
    chain = parse_assumption_chain(chain_response.text, ctx.goal)
    if not chain.assumptions:
        raise EmptyCompletion("assumption identification produced no assumptions")
    aggregate = gateway.complete(
        ModelRequest(
            agent_kind=AgentKind.GENERATION,
            template_id="generation_assumptions_aggregate",
            bindings={
                "goal": ctx.goal,
                "preferences": ctx.plan.preferences,
                "assumptions": chain.rendered(),
            },
            trace_id=trace_id,
        )
    )
    calls += 1
    if not aggregate.text.strip():
        raise EmptyCompletion("assumption aggregation returned no text")
    content = f"{aggregate.text.strip()}\n\nAssumption chain:\n{chain.rendered()}"
    proposal, extra = _proposal(content, HypothesisOrigin.GENERATED_ASSUMPTIONS, gateway)
    return [proposal], calls + extra


_AREA_LINE_RE = re.compile(r"(?m)^area\s*:\s*(.+)$", re.IGNORECASE)


def generate_via_expansion(
    ctx: GenerationContext, gateway: Backend, *, count: int = 1, trace_id: str = ""
) -> tuple[list[HypothesisProposal], int]:
    """Extend an under-explored area of the current research overview."""
    if not ctx.overview:
        raise MissingOverview("expansion requires a research overview")
    calls = 0
    summaries = "\n".join(f"[{hid}] {s}" for hid, s in ctx.existing_summaries) or "(none)"
    proposals: list[HypothesisProposal] = []
    for index in range(count):
        instructions = ctx.instructions_block()
        if count > 1:
            distinct = f"Proposal {index + 1} of {count}; choose a different area if possible."
            instructions = f"{instructions}\n\n{distinct}" if instructions else distinct
        response = gateway.complete(
            ModelRequest(
                agent_kind=AgentKind.GENERATION,
                template_id="generation_expansion",
                bindings={
                    "goal": ctx.goal,
                    "preferences": ctx.plan.preferences,
                    "instructions": instructions,
                    "overview": ctx.overview,
                    "existing_summaries": summaries,
                },
                trace_id=f"{trace_id}/{index}" if trace_id else "",
            )
        )
        calls += 1
        if not response.text.strip():
            raise EmptyCompletion("expansion returned no text")
        area_match = _AREA_LINE_RE.search(response.text)
        area = area_match.group(1).strip() if area_match else ""
        proposal, extra = _proposal(
            response.text.strip(),
            HypothesisOrigin.GENERATED_EXPANSION,
            gateway,
            category=area,
        )
        calls += extra
        proposals.append(proposal)
    return proposals, calls
