from __future__ import annotations

from pathlib import Path

import pytest

from hypogen.config import EngineConfig
from hypogen.core import ResearchGoal, ResearchPlanConfig
from hypogen.literature import FixtureCorpus

FIXTURES = Path(__file__).parent / "fixtures"

GOAL_TEXT = (
    "Explain the key factor or process which causes ALS related to "
    "phosphorylation of a nuclear pore complex nucleoporin, with a feasible "
    "experiment to test the hypothesis."
)


@pytest.fixture
def corpus() -> FixtureCorpus:
    return FixtureCorpus(FIXTURES / "corpus")


@pytest.fixture
def plan() -> ResearchPlanConfig:
    return ResearchPlanConfig(
        preferences="Focus on providing a novel hypothesis, with detailed "
        "explanation of the mechanism of action.",
        attributes=("Novelty", "Feasibility"),
        constraints=("should be correct", "should be novel"),
        evaluation_criteria=({"name": "novelty", "rubric": "prefer unexplored mechanisms"},),
    )


@pytest.fixture
def goal() -> ResearchGoal:
    return ResearchGoal(goal_text=GOAL_TEXT)


def small_config(**overrides) -> EngineConfig:
    base = dict(
        budgets={"max_matches": 12, "max_hypotheses": 14, "max_model_calls": 2000},
        seed=42,
        meta_review_every_matches=6,
        meta_review_every_reviews=8,
    )
    base.update(overrides)
    return EngineConfig(**base)


@pytest.fixture
def config() -> EngineConfig:
    return small_config()
