"""Session store: the state the single state-keeper folds events into.

The store is a deterministic function of the event sequence. Workers never
mutate it; they read a snapshot and propose events, and ``apply`` is the
only mutation path. Checkpoints serialize the whole store; restore is
``from_blob`` plus replay of the event tail.
"""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .agents.meta_review import MetaCritique, ResearchContact, ResearchOverview
from .agents.safety import SafetyDecision
from .core import (
    Hypothesis,
    HypothesisState,
    LifecycleEvent,
    ResearchGoal,
    ResearchPlanConfig,
    Review,
    SessionStats,
    TournamentMatch,
    transition_hypothesis_state,
)
from .errors import RestoreFailure
from .events import ContextMemoryEvent, EventKind, canonical_json

CHECKPOINT_FORMAT_VERSION = 1


def _id_seq(entity_id: str) -> int:
    """Trailing integer of ids like "r-0007"; 0 when absent."""
    tail = entity_id.rsplit("-", 1)[-1]
    return int(tail) if tail.isdigit() else 0


class SessionPhase(str, Enum):
    PARSING = "parsing"
    RUNNING = "running"
    PAUSED = "paused"
    TERMINAL_COMPLETE = "terminal_complete"
    TERMINAL_REJECTED_UNSAFE = "terminal_rejected_unsafe"
    TERMINAL_BUDGET_EXHAUSTED = "terminal_budget_exhausted"


TERMINAL_PHASES = frozenset(
    {
        SessionPhase.TERMINAL_COMPLETE,
        SessionPhase.TERMINAL_REJECTED_UNSAFE,
        SessionPhase.TERMINAL_BUDGET_EXHAUSTED,
    }
)


class TaskKind(str, Enum):
    PARSE_GOAL = "parse_goal"
    GENERATE = "generate"
    REFLECT = "reflect"
    RANK_MATCH = "rank_match"
    PROXIMITY_UPDATE = "proximity_update"
    EVOLVE = "evolve"
    META_REVIEW = "meta_review"
    SAFETY_REVIEW = "safety_review"
    OVERVIEW = "overview"


#: Reviews gate everything downstream, so they sort first.
TASK_PRIORITY: dict[TaskKind, float] = {
    TaskKind.SAFETY_REVIEW: 90.0,
    TaskKind.PARSE_GOAL: 80.0,
    TaskKind.REFLECT: 70.0,
    TaskKind.RANK_MATCH: 60.0,
    TaskKind.EVOLVE: 50.0,
    TaskKind.GENERATE: 40.0,
    TaskKind.PROXIMITY_UPDATE: 30.0,
    TaskKind.META_REVIEW: 20.0,
    TaskKind.OVERVIEW: 10.0,
}


class Task(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    kind: TaskKind
    payload: dict = Field(default_factory=dict)
    priority: float = 0.0
    enqueued_seq: int = 0
    attempts: int = 0


class Budgets(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_matches: int = 0
    max_hypotheses: int = 0
    max_model_calls: int = 0


class Consumed(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_matches: int = 0
    max_hypotheses: int = 0
    max_model_calls: int = 0

    def exhausted_against(self, budgets: Budgets) -> Optional[str]:
        if self.max_matches >= budgets.max_matches:
            return "max_matches"
        if self.max_hypotheses >= budgets.max_hypotheses:
            return "max_hypotheses"
        if self.max_model_calls >= budgets.max_model_calls:
            return "max_model_calls"
        return None


class SessionState(BaseModel):
    model_config = ConfigDict(frozen=True)

    phase: SessionPhase
    budgets: Budgets
    consumed: Consumed
    rng_seed: int


class SafetyAlert(BaseModel):
    model_config = ConfigDict(frozen=True)

    subject: str
    reasoning: str
    raised_at: str = ""


class SessionStore:
    """Mutable state owned exclusively by the orchestrator's state keeper."""

    def __init__(self, session_id: str, budgets: Budgets, rng_seed: int) -> None:
        self.session_id = session_id
        self.phase = SessionPhase.PARSING
        self.budgets = budgets
        self.consumed = Consumed()
        self.rng_seed = rng_seed

        self.goal: Optional[ResearchGoal] = None
        self.plan: Optional[ResearchPlanConfig] = None
        self.hypotheses: dict[str, Hypothesis] = {}
        self.reviews: dict[str, Review] = {}
        self.matches: dict[str, TournamentMatch] = {}
        self.annotations: dict[str, list[str]] = {}
        self.safety_decisions: list[SafetyDecision] = []
        self.alerts: list[SafetyAlert] = []
        self.critiques: list[MetaCritique] = []
        self.overviews: list[ResearchOverview] = []
        self.contacts: list[ResearchContact] = []
        self.proximity_edges: dict[str, float] = {}
        self.guidance: list[str] = []
        self.provenance_tags: dict[str, str] = {}

        self.pending_tasks: dict[str, Task] = {}
        self.in_flight_tasks: dict[str, Task] = {}
        self.dead_letter: list[Task] = []

        self.last_seq = 0
        self.next_task_seq = 1
        self.next_hypothesis_seq = 1
        self.next_review_seq = 1
        self.next_match_seq = 1
        self.tasks_started_total = 0
        self.tasks_completed_total = 0
        self.reviews_since_meta = 0
        self.matches_since_meta = 0
        self.tasks_since_stats = 0
        self.stats_latest: Optional[SessionStats] = None
        self.stop_requested = False

    # -- queries --------------------------------------------------------

    def session_state(self) -> SessionState:
        return SessionState(
            phase=self.phase,
            budgets=self.budgets,
            consumed=self.consumed,
            rng_seed=self.rng_seed,
        )

    def active_hypotheses(self) -> list[Hypothesis]:
        return sorted(
            (
                h
                for h in self.hypotheses.values()
                if h.state == HypothesisState.ACTIVE_IN_TOURNAMENT
            ),
            key=lambda h: h.created_seq,
        )

    def hypotheses_by_elo(self) -> list[Hypothesis]:
        return sorted(
            self.active_hypotheses(), key=lambda h: (-h.elo, h.created_seq)
        )

    def reviews_of(self, hypothesis_id: str) -> list[Review]:
        hyp = self.hypotheses.get(hypothesis_id)
        if hyp is None:
            return []
        return [self.reviews[rid] for rid in hyp.reviews if rid in self.reviews]

    def matches_of(self, hypothesis_id: str) -> list[TournamentMatch]:
        return [
            m
            for m in self.matches.values()
            if hypothesis_id in (m.hypothesis_a, m.hypothesis_b)
        ]

    def matches_played_map(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for m in self.matches.values():
            counts[m.hypothesis_a] = counts.get(m.hypothesis_a, 0) + 1
            counts[m.hypothesis_b] = counts.get(m.hypothesis_b, 0) + 1
        return counts

    def in_flight_hypothesis_ids(self) -> frozenset[str]:
        locked: set[str] = set()
        for task in self.in_flight_tasks.values():
            pair = task.payload.get("pair")
            if pair:
                locked.update(pair)
        return frozenset(locked)

    def latest_critique(self) -> Optional[MetaCritique]:
        return self.critiques[-1] if self.critiques else None

    def latest_overview(self) -> Optional[ResearchOverview]:
        return self.overviews[-1] if self.overviews else None

    def pending_by_kind(self, kind: TaskKind) -> list[Task]:
        return [t for t in self.pending_tasks.values() if t.kind == kind]

    def is_terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    # -- event application ------------------------------------------------

    def apply(self, event: ContextMemoryEvent) -> None:
        if event.seq != self.last_seq + 1:
            raise RestoreFailure(
                f"event seq {event.seq} applied out of order (have {self.last_seq})"
            )
        handler = getattr(self, f"_apply_{event.kind.value}", None)
        if handler is None:
            raise RestoreFailure(f"no handler for event kind {event.kind.value}")
        handler(event.body)
        self.last_seq = event.seq

    def _apply_goal_recorded(self, body: dict) -> None:
        self.goal = ResearchGoal(**body["goal"])
        if body.get("session_id"):
            self.session_id = body["session_id"]

    def _apply_task_enqueued(self, body: dict) -> None:
        task = Task(**body["task"])
        self.pending_tasks[task.id] = task
        self.next_task_seq = max(self.next_task_seq, task.enqueued_seq + 1)

    def _apply_task_started(self, body: dict) -> None:
        task_id = body["task_id"]
        task = self.pending_tasks.pop(task_id)
        if "payload" in body:
            task = task.model_copy(update={"payload": body["payload"]})
        self.in_flight_tasks[task_id] = task
        self.tasks_started_total += 1

    def _apply_task_completed(self, body: dict) -> None:
        self.in_flight_tasks.pop(body["task_id"], None)
        self.tasks_completed_total += 1
        self.tasks_since_stats += 1
        calls = int(body.get("model_calls", 0))
        self.consumed = self.consumed.model_copy(
            update={"max_model_calls": self.consumed.max_model_calls + calls}
        )

    def _apply_task_failed(self, body: dict) -> None:
        self.in_flight_tasks.pop(body["task_id"], None)
        self.tasks_completed_total += 1
        self.tasks_since_stats += 1
        calls = int(body.get("model_calls", 0))
        self.consumed = self.consumed.model_copy(
            update={"max_model_calls": self.consumed.max_model_calls + calls}
        )

    def _apply_task_dead_lettered(self, body: dict) -> None:
        self.dead_letter.append(Task(**body["task"]))

    def _apply_hypothesis_created(self, body: dict) -> None:
        hyp = Hypothesis(**body["hypothesis"])
        self.hypotheses[hyp.id] = hyp
        self.next_hypothesis_seq = max(self.next_hypothesis_seq, hyp.created_seq + 1)
        self.consumed = self.consumed.model_copy(
            update={"max_hypotheses": self.consumed.max_hypotheses + 1}
        )
        if hyp.provenance_tag:
            self.provenance_tags[hyp.id] = hyp.provenance_tag

    def _apply_hypothesis_state_changed(self, body: dict) -> None:
        hyp = self.hypotheses[body["hypothesis_id"]]
        lifecycle_event = LifecycleEvent(body["event"])
        new_state = transition_hypothesis_state(hyp.state, lifecycle_event)
        self.hypotheses[hyp.id] = hyp.model_copy(update={"state": new_state})

    def _apply_review_added(self, body: dict) -> None:
        review = Review(**body["review"])
        self.reviews[review.id] = review
        self.next_review_seq = max(self.next_review_seq, _id_seq(review.id) + 1)
        hyp = self.hypotheses.get(review.hypothesis_id)
        if hyp is not None:
            self.hypotheses[hyp.id] = hyp.model_copy(
                update={"reviews": hyp.reviews + (review.id,)}
            )
        self.reviews_since_meta += 1

    def _apply_annotation_added(self, body: dict) -> None:
        self.annotations.setdefault(body["hypothesis_id"], []).append(body["text"])

    def _apply_match_completed(self, body: dict) -> None:
        match = TournamentMatch(**body["match"])
        self.matches[match.id] = match
        self.next_match_seq = max(self.next_match_seq, _id_seq(match.id) + 1)
        a = self.hypotheses[match.hypothesis_a]
        b = self.hypotheses[match.hypothesis_b]
        self.hypotheses[a.id] = a.model_copy(update={"elo": match.elo_after[0]})
        self.hypotheses[b.id] = b.model_copy(update={"elo": match.elo_after[1]})
        self.consumed = self.consumed.model_copy(
            update={"max_matches": self.consumed.max_matches + 1}
        )
        self.matches_since_meta += 1

    def _apply_proximity_updated(self, body: dict) -> None:
        for key, value in body["edges"].items():
            self.proximity_edges[key] = float(value)

    def _apply_stats_snapshot(self, body: dict) -> None:
        self.stats_latest = SessionStats(**body["stats"])
        self.tasks_since_stats = 0

    def _apply_meta_critique_updated(self, body: dict) -> None:
        self.critiques.append(MetaCritique(**body["critique"]))
        self.reviews_since_meta = 0
        self.matches_since_meta = 0

    def _apply_overview_updated(self, body: dict) -> None:
        self.overviews.append(ResearchOverview(**body["overview"]))

    def _apply_contacts_updated(self, body: dict) -> None:
        self.contacts = [ResearchContact(**c) for c in body["contacts"]]

    def _apply_plan_updated(self, body: dict) -> None:
        self.plan = ResearchPlanConfig(**body["plan"])

    def _apply_safety_decision(self, body: dict) -> None:
        self.safety_decisions.append(SafetyDecision(**body["decision"]))

    def _apply_safety_alert(self, body: dict) -> None:
        self.alerts.append(SafetyAlert(**body))

    def _apply_guidance_added(self, body: dict) -> None:
        self.guidance.append(body["text"])

    def _apply_session_state_changed(self, body: dict) -> None:
        self.phase = SessionPhase(body["phase"])
        if body.get("stop_requested"):
            self.stop_requested = True

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "phase": self.phase.value,
            "budgets": self.budgets.model_dump(),
            "consumed": self.consumed.model_dump(),
            "rng_seed": self.rng_seed,
            "goal": self.goal.model_dump(mode="json") if self.goal else None,
            "plan": self.plan.model_dump(mode="json") if self.plan else None,
            "hypotheses": {k: v.model_dump(mode="json") for k, v in self.hypotheses.items()},
            "reviews": {k: v.model_dump(mode="json") for k, v in self.reviews.items()},
            "matches": {k: v.model_dump(mode="json") for k, v in self.matches.items()},
            "annotations": self.annotations,
            "safety_decisions": [d.model_dump(mode="json") for d in self.safety_decisions],
            "alerts": [a.model_dump(mode="json") for a in self.alerts],
            "critiques": [c.model_dump(mode="json") for c in self.critiques],
            "overviews": [o.model_dump(mode="json") for o in self.overviews],
            "contacts": [c.model_dump(mode="json") for c in self.contacts],
            "proximity_edges": self.proximity_edges,
            "guidance": self.guidance,
            "provenance_tags": self.provenance_tags,
            "pending_tasks": {k: v.model_dump(mode="json") for k, v in self.pending_tasks.items()},
            "in_flight_tasks": {k: v.model_dump(mode="json") for k, v in self.in_flight_tasks.items()},
            "dead_letter": [t.model_dump(mode="json") for t in self.dead_letter],
            "counters": {
                "last_seq": self.last_seq,
                "next_task_seq": self.next_task_seq,
                "next_hypothesis_seq": self.next_hypothesis_seq,
                "next_review_seq": self.next_review_seq,
                "next_match_seq": self.next_match_seq,
                "tasks_started_total": self.tasks_started_total,
                "tasks_completed_total": self.tasks_completed_total,
                "reviews_since_meta": self.reviews_since_meta,
                "matches_since_meta": self.matches_since_meta,
                "tasks_since_stats": self.tasks_since_stats,
            },
            "stats_latest": self.stats_latest.model_dump(mode="json") if self.stats_latest else None,
            "stop_requested": self.stop_requested,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionStore":
        store = cls(
            session_id=data["session_id"],
            budgets=Budgets(**data["budgets"]),
            rng_seed=data["rng_seed"],
        )
        store.phase = SessionPhase(data["phase"])
        store.consumed = Consumed(**data["consumed"])
        store.goal = ResearchGoal(**data["goal"]) if data.get("goal") else None
        store.plan = ResearchPlanConfig(**data["plan"]) if data.get("plan") else None
        store.hypotheses = {k: Hypothesis(**v) for k, v in data["hypotheses"].items()}
        store.reviews = {k: Review(**v) for k, v in data["reviews"].items()}
        store.matches = {k: TournamentMatch(**v) for k, v in data["matches"].items()}
        store.annotations = {k: list(v) for k, v in data["annotations"].items()}
        store.safety_decisions = [SafetyDecision(**d) for d in data["safety_decisions"]]
        store.alerts = [SafetyAlert(**a) for a in data["alerts"]]
        store.critiques = [MetaCritique(**c) for c in data["critiques"]]
        store.overviews = [ResearchOverview(**o) for o in data["overviews"]]
        store.contacts = [ResearchContact(**c) for c in data["contacts"]]
        store.proximity_edges = {k: float(v) for k, v in data["proximity_edges"].items()}
        store.guidance = list(data["guidance"])
        store.provenance_tags = dict(data.get("provenance_tags", {}))
        store.pending_tasks = {k: Task(**t) for k, t in data["pending_tasks"].items()}
        store.in_flight_tasks = {k: Task(**t) for k, t in data["in_flight_tasks"].items()}
        store.dead_letter = [Task(**t) for t in data["dead_letter"]]
        counters = data["counters"]
        store.last_seq = counters["last_seq"]
        store.next_task_seq = counters["next_task_seq"]
        store.next_hypothesis_seq = counters["next_hypothesis_seq"]
        store.next_review_seq = counters["next_review_seq"]
        store.next_match_seq = counters["next_match_seq"]
        store.tasks_started_total = counters["tasks_started_total"]
        store.tasks_completed_total = counters["tasks_completed_total"]
        store.reviews_since_meta = counters["reviews_since_meta"]
        store.matches_since_meta = counters["matches_since_meta"]
        store.tasks_since_stats = counters["tasks_since_stats"]
        store.stats_latest = (
            SessionStats(**data["stats_latest"]) if data.get("stats_latest") else None
        )
        store.stop_requested = bool(data.get("stop_requested", False))
        return store

    def clone(self) -> "SessionStore":
        return SessionStore.from_dict(json.loads(canonical_json(self.to_dict())))

    # -- checkpoints ---------------------------------------------------------

    def to_checkpoint(self) -> dict:
        """Checkpoint blob: header + serialized store + rng state.

        The engine derives every random draw from (rng_seed, counters), so
        the rng state is exactly those two ingredients.
        """
        payload = canonical_json(self.to_dict())
        store_data = json.loads(payload)
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "high_water_seq": self.last_seq,
            "checksum": hashlib.sha256(payload.encode()).hexdigest(),
            "rng_state": {
                "seed": self.rng_seed,
                "tasks_started_total": self.tasks_started_total,
            },
            "store": store_data,
        }

    @classmethod
    def from_checkpoint(cls, blob: dict) -> "SessionStore":
        if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise RestoreFailure(
                f"unsupported checkpoint format {blob.get('format_version')!r}"
            )
        payload = canonical_json(blob.get("store"))
        checksum = hashlib.sha256(payload.encode()).hexdigest()
        if checksum != blob.get("checksum"):
            raise RestoreFailure("checkpoint checksum mismatch")
        store = cls.from_dict(blob["store"])
        if store.last_seq != blob.get("high_water_seq"):
            raise RestoreFailure("checkpoint high_water_seq disagrees with store")
        return store


def compute_stats(store: SessionStore, top_k: int = 10) -> SessionStats:
    """Summary statistics derived purely from the store."""
    hypotheses = list(store.hypotheses.values())
    unreviewed = sum(1 for h in hypotheses if not h.reviews)
    active = store.active_hypotheses()
    wins: dict[str, int] = {}
    losses: dict[str, int] = {}
    for match in store.matches.values():
        winner_id = match.hypothesis_a if match.winner.value == "a" else match.hypothesis_b
        loser_id = match.hypothesis_b if match.winner.value == "a" else match.hypothesis_a
        for hid, bucket in ((winner_id, wins), (loser_id, losses)):
            hyp = store.hypotheses.get(hid)
            if hyp is not None:
                bucket[hyp.origin.value] = bucket.get(hyp.origin.value, 0) + 1
    rates: dict[str, float] = {}
    for origin in set(wins) | set(losses):
        w = wins.get(origin, 0)
        l = losses.get(origin, 0)
        rates[origin] = w / (w + l)
    elos = sorted((h.elo for h in active), reverse=True)
    top = elos[:top_k]
    return SessionStats(
        hypotheses_total=len(hypotheses),
        hypotheses_unreviewed=unreviewed,
        hypotheses_active=len(active),
        matches_played=len(store.matches),
        per_origin_win_rate=rates,
        top_k_mean_elo=sum(top) / len(top) if top else None,
        best_elo=elos[0] if elos else None,
        tasks_pending=len(store.pending_tasks),
    )
