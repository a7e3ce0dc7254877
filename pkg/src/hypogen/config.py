"""Engine configuration: backend choice, agent weights, budgets, knobs.

Loadable from a JSON file with sections {backend, weights, budgets, elo,
proximity, safety, seed}; unspecified fields take the defaults below.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class BackendConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str = "sim"  # sim | scripted | http
    endpoint: str = ""
    model: str = ""
    token_env: str = "HYPOGEN_MODEL_TOKEN"
    script_path: str = ""


class BudgetConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_matches: int = 40
    max_hypotheses: int = 24
    max_model_calls: int = 4000

    @model_validator(mode="after")
    def _positive(self) -> "BudgetConfig":
        if min(self.max_matches, self.max_hypotheses, self.max_model_calls) <= 0:
            raise ValueError("budgets must be positive")
        return self


class EloConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_factor: float = 32.0
    initial_rating: float = 1200.0
    scale: float = 400.0
    base: float = 10.0
    top_rank_debate_threshold: int = 10

    @model_validator(mode="after")
    def _fixed_initial(self) -> "EloConfig":
        if self.initial_rating != 1200.0:
            raise ValueError("initial rating is fixed at 1200")
        if self.k_factor <= 0 or self.scale <= 0 or self.base <= 0:
            raise ValueError("elo constants must be positive")
        return self


class ProximityConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dedup_threshold: float = 0.95
    metric: str = "model"  # model | jaccard
    # Duplicates are only retired once they have been compared this many
    # times; retiring an unranked newcomer would bypass the tournament.
    dedup_min_matches: int = 3
    # And only when clearly dominated by the cluster best (rating deficit).
    dedup_retire_margin: float = 0.0

    @model_validator(mode="after")
    def _threshold_in_range(self) -> "ProximityConfig":
        if not 0.0 < self.dedup_threshold <= 1.0:
            raise ValueError("dedup_threshold must be in (0, 1]")
        return self


class SafetyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    enabled: bool = True
    unsafe_marker: str = "[UNSAFE]"
    redact_contacts: bool = False


DEFAULT_WEIGHTS: dict[str, float] = {
    "parse_goal": 1.0,
    "generate": 1.0,
    "reflect": 2.0,
    "rank_match": 2.0,
    "proximity_update": 0.5,
    "evolve": 1.0,
    "meta_review": 0.5,
    "safety_review": 1.0,
    "overview": 0.5,
}


class EngineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    backend: BackendConfig = BackendConfig()
    weights: dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    budgets: BudgetConfig = BudgetConfig()
    elo: EloConfig = EloConfig()
    proximity: ProximityConfig = ProximityConfig()
    safety: SafetyConfig = SafetyConfig()
    seed: int = 0

    # engine knobs
    worker_count: int = 1
    max_attempts: int = 3
    hypotheses_per_generation: int = 3
    max_literature_iterations: int = 3
    initial_generation_tasks: int = 2
    evolve_every_matches: int = 3
    evolve_match_horizon: float = 0.75  # stop evolving after this fraction of the match budget
    evolution_strategy_weights: dict[str, float] = Field(default_factory=dict)
    combination_parents: int = 3
    meta_review_every_matches: int = 25
    meta_review_every_reviews: int = 20
    meta_review_window: int = 40
    critique_injection_fraction: float = 0.5
    initial_reject_threshold: int = 2
    stats_every_tasks: int = 10
    checkpoint_every_tasks: int = 0  # 0 disables periodic checkpoints
    top_k_stats: int = 10
    digest_max_chars: int = 4000
    extra_review_fraction: float = 0.25

    @model_validator(mode="after")
    def _check(self) -> "EngineConfig":
        if not any(w > 0 for w in self.weights.values()):
            raise ValueError("at least one agent weight must be positive")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("agent weights must be non-negative")
        if not 0.0 <= self.critique_injection_fraction <= 1.0:
            raise ValueError("critique_injection_fraction must be in [0,1]")
        if not 0.0 < self.evolve_match_horizon <= 1.0:
            raise ValueError("evolve_match_horizon must be in (0,1]")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        return self

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        merged_weights = dict(DEFAULT_WEIGHTS)
        merged_weights.update(data.get("weights", {}))
        data = {**data, "weights": merged_weights}
        return cls(**data)

    def override(self, **changes: object) -> "EngineConfig":
        return self.model_copy(update=changes)
