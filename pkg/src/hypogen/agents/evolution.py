"""Evolution agent: descendant hypotheses via six refinement strategies.

Evolution only ever creates new hypotheses; parents are immutable and
children re-enter the review gates at Elo 1200 like any fresh draft.
"""

from __future__ import annotations

import random
from enum import Enum
from typing import Sequence

from pydantic import BaseModel, ConfigDict

from ..core import Hypothesis, HypothesisOrigin, HypothesisState, ResearchPlanConfig
from ..errors import EmptyCompletion, InsufficientPopulation, ParentNotActive
from ..gateway import AgentKind, Backend, ModelRequest
from .generation import HypothesisProposal, summarize


class EvolutionStrategy(str, Enum):
    GROUNDING = "grounding"
    COHERENCE_FEASIBILITY = "coherence_feasibility"
    INSPIRATION = "inspiration"
    COMBINATION = "combination"
    SIMPLIFICATION = "simplification"
    OUT_OF_BOX = "out_of_box"


_SINGLE_PARENT = frozenset(
    {
        EvolutionStrategy.GROUNDING,
        EvolutionStrategy.COHERENCE_FEASIBILITY,
        EvolutionStrategy.SIMPLIFICATION,
    }
)

_TEMPLATE_OF = {
    EvolutionStrategy.GROUNDING: "evolution_grounding",
    EvolutionStrategy.COHERENCE_FEASIBILITY: "evolution_feasibility",
    EvolutionStrategy.INSPIRATION: "evolution_inspiration",
    EvolutionStrategy.COMBINATION: "evolution_combination",
    EvolutionStrategy.SIMPLIFICATION: "evolution_simplification",
    EvolutionStrategy.OUT_OF_BOX: "evolution_out_of_box",
}


class EvolutionDirective(BaseModel):
    model_config = ConfigDict(frozen=True)

    strategy: EvolutionStrategy
    parent_ids: tuple[str, ...]
    plan: ResearchPlanConfig

    def model_post_init(self, __context: object) -> None:
        n = len(self.parent_ids)
        if self.strategy in _SINGLE_PARENT and n != 1:
            raise ValueError(f"{self.strategy.value} requires exactly 1 parent, got {n}")
        if self.strategy == EvolutionStrategy.COMBINATION and n < 2:
            raise ValueError(f"combination requires at least 2 parents, got {n}")
        if n < 1:
            raise ValueError("evolution requires at least one parent")


def required_arity(strategy: EvolutionStrategy) -> int:
    return 2 if strategy == EvolutionStrategy.COMBINATION else 1


def evolve(
    directive: EvolutionDirective,
    parents: Sequence[Hypothesis],
    gateway: Backend,
    *,
    goal: str,
    trace_id: str = "",
) -> tuple[HypothesisProposal, int]:
    """Produce one descendant proposal from active parents."""
    if tuple(p.id for p in parents) != directive.parent_ids:
        raise ValueError("parents must match the directive's parent_ids in order")
    for parent in parents:
        if parent.state != HypothesisState.ACTIVE_IN_TOURNAMENT:
            raise ParentNotActive(f"{parent.id} is {parent.state.value}")

    template_id = _TEMPLATE_OF[directive.strategy]
    if directive.strategy in (EvolutionStrategy.COMBINATION, EvolutionStrategy.OUT_OF_BOX):
        bindings = {
            "goal": goal,
            "preferences": directive.plan.preferences,
            "hypotheses": "\n\n".join(
                f"[{p.id}]\n{p.content}" for p in parents
            ),
        }
    else:
        joined = "\n\n".join(p.content for p in parents)
        bindings = {
            "goal": goal,
            "preferences": directive.plan.preferences,
            "hypothesis": joined,
        }
    response = gateway.complete(
        ModelRequest(
            agent_kind=AgentKind.EVOLUTION,
            template_id=template_id,
            bindings=bindings,
            trace_id=trace_id,
        )
    )
    calls = 1
    if not response.text.strip():
        raise EmptyCompletion("evolution returned no text")
    summary, category, extra = summarize(response.text.strip(), gateway)
    calls += extra
    origin = (
        HypothesisOrigin.COMBINED
        if directive.strategy == EvolutionStrategy.COMBINATION
        else HypothesisOrigin.EVOLVED
    )
    proposal = HypothesisProposal(
        content=response.text.strip(),
        summary=summary,
        category=category or parents[0].category,
        origin=origin,
        parent_ids=directive.parent_ids,
    )
    return proposal, calls


def select_evolution_parents(
    active: Sequence[Hypothesis],
    strategy: EvolutionStrategy,
    rng: random.Random,
    *,
    combination_parents: int = 3,
) -> list[str]:
    """Rank-weighted parent sampling (weight 1/rank by Elo, top heavy)."""
    arity = required_arity(strategy)
    if len(active) < arity:
        raise InsufficientPopulation(
            f"{strategy.value} needs {arity} active hypotheses, have {len(active)}"
        )
    ranked = sorted(active, key=lambda h: (-h.elo, h.created_seq))
    pool = list(ranked)
    chosen: list[str] = []
    count = (
        max(arity, combination_parents)
        if strategy == EvolutionStrategy.COMBINATION
        else arity
    )
    count = min(count, len(pool))
    while len(chosen) < count:
        weights = [1.0 / (ranked.index(h) + 1) for h in pool]
        total = sum(weights)
        point = rng.random() * total
        acc = 0.0
        pick = pool[-1]
        for h, w in zip(pool, weights):
            acc += w
            if point <= acc:
                pick = h
                break
        chosen.append(pick.id)
        pool.remove(pick)
    return chosen
