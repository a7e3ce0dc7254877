"""hypogen: a multi-agent research hypothesis engine.

Generates candidate hypotheses for a natural-language research goal, ranks
them in a judged tournament, evolves the winners, and feeds synthesized
critique back into every agent, with an expert in the loop over HTTP.
"""

from .config import EngineConfig
from .core import (
    Hypothesis,
    HypothesisOrigin,
    HypothesisState,
    ResearchGoal,
    ResearchPlanConfig,
    Review,
    ReviewKind,
    ReviewVerdict,
    SessionStats,
    TournamentMatch,
    elo_bucket_of,
)
from .orchestrator import Engine
from .store import SessionPhase

__all__ = [
    "Engine",
    "EngineConfig",
    "Hypothesis",
    "HypothesisOrigin",
    "HypothesisState",
    "ResearchGoal",
    "ResearchPlanConfig",
    "Review",
    "ReviewKind",
    "ReviewVerdict",
    "SessionPhase",
    "SessionStats",
    "TournamentMatch",
    "elo_bucket_of",
]

__version__ = "0.1.0"
