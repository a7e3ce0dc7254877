"""Asynchronous task framework: supervisor scheduling, worker execution,
follow-up wiring, statistics, terminal detection, and checkpoint/restore.

One state keeper applies all mutations serially; workers are pure functions
from (task, store snapshot, gateway) to proposed events. Events are written
in atomic batches, one per task or expert action, so a crash can only tear
the final batch, which restore discards and re-executes. Every random draw
is derived from (seed, purpose, deterministic index), never from shared rng
state, which makes single-worker runs byte-reproducible and crash recovery
exact.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from pathlib import Path
from typing import Callable, Optional, Sequence

from .agents import evolution as evolution_agent
from .agents import generation as generation_agent
from .agents import meta_review as meta_review_agent
from .agents import reflection as reflection_agent
from .agents import safety as safety_agent
from .agents.evolution import EvolutionDirective, EvolutionStrategy
from .agents.generation import GenerationContext
from .agents.ranking import (
    EloParams,
    ProximityGraph,
    ScheduledPair,
    compute_similarity,
    dedup_clusters,
    jaccard_similarity,
    run_match,
    schedule_matches,
)
from .agents.reflection import ReviewRequest
from .agents.safety import SafetyVerdict
from .config import EngineConfig
from .core import (
    Hypothesis,
    HypothesisOrigin,
    HypothesisState,
    LifecycleEvent,
    MatchMode,
    ResearchGoal,
    ResearchPlanConfig,
    Review,
    ReviewKind,
    ReviewVerdict,
    SessionStats,
)
from .errors import (
    EngineError,
    InsufficientPopulation,
    MissingSession,
    RestoreFailure,
    SessionTerminal,
    SourceUnavailable,
    TaskFailed,
)
from .events import (
    ContextMemoryEvent,
    EventKind,
    EventLogWriter,
    InMemoryEventLog,
    read_event_log,
    verify_tail_contiguous,
)
from .gateway import Backend, HttpBackend, MockScript, ScriptedBackend
from .literature import LiteratureSource
from .simbackend import SimBackend
from .store import (
    Budgets,
    SessionPhase,
    SessionStore,
    Task,
    TaskKind,
    TASK_PRIORITY,
    compute_stats,
)

AgentWeights = dict[TaskKind, float]

LOGICAL_EPOCH = "2030-01-01T00:00:"


class LogicalClock:
    """Deterministic timestamps derived from the event sequence."""

    def event_time(self, seq: int) -> str:
        minutes, seconds = divmod(seq, 60)
        hours, minutes = divmod(minutes, 60)
        return f"2030-01-01T{hours % 24:02d}:{minutes:02d}:{seconds:02d}Z"

    def record_time(self, counter: int) -> str:
        return self.event_time(counter)


class WallClock:
    def event_time(self, seq: int) -> str:
        from datetime import datetime, timezone

        return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def record_time(self, counter: int) -> str:
        return self.event_time(counter)


def derived_rng(seed: int, *scope: object) -> random.Random:
    """Independent rng stream for one decision point; platform stable."""
    key = ":".join(str(part) for part in scope)
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def normalize_weights(raw: dict[str, float]) -> AgentWeights:
    weights: AgentWeights = {}
    for kind in TaskKind:
        weights[kind] = float(raw.get(kind.value, 0.0))
    return weights


def next_task(
    weights: AgentWeights, store: SessionStore, rng: random.Random
) -> Optional[Task]:
    """Sample a task kind proportionally to weight, then pop by priority.

    Only kinds with pending work are eligible; ties within a kind break by
    lowest enqueued_seq. Returns None (idle) when nothing is eligible.
    """
    if store.phase not in (SessionPhase.PARSING, SessionPhase.RUNNING):
        return None
    if store.phase == SessionPhase.PARSING:
        # Bootstrap is strictly ordered: the goal safety gate runs before
        # parsing, and nothing else runs until both have settled.
        gatekeepers = [
            t
            for t in store.pending_tasks.values()
            if t.kind in (TaskKind.SAFETY_REVIEW, TaskKind.PARSE_GOAL)
        ]
        if not gatekeepers:
            return None
        gatekeepers.sort(key=lambda t: (-t.priority, t.enqueued_seq))
        return gatekeepers[0]
    eligible_kinds = sorted(
        {t.kind for t in store.pending_tasks.values()}, key=lambda k: k.value
    )
    if not eligible_kinds:
        return None
    kind_weights = [max(0.0, weights.get(kind, 0.0)) for kind in eligible_kinds]
    total = sum(kind_weights)
    if total <= 0.0:
        # All pending kinds are zero-weighted; fall back to uniform so the
        # queue cannot deadlock.
        kind_weights = [1.0] * len(eligible_kinds)
        total = float(len(eligible_kinds))
    point = rng.random() * total
    acc = 0.0
    chosen = eligible_kinds[-1]
    for kind, weight in zip(eligible_kinds, kind_weights):
        acc += weight
        if point <= acc:
            chosen = kind
            break
    candidates = [t for t in store.pending_tasks.values() if t.kind == chosen]
    candidates.sort(key=lambda t: (-t.priority, t.enqueued_seq))
    return candidates[0]


class ProposedEvent:
    __slots__ = ("kind", "body")

    def __init__(self, kind: EventKind, body: dict) -> None:
        self.kind = kind
        self.body = body


class HandlerResult:
    def __init__(
        self,
        events: list[ProposedEvent],
        *,
        outcome: str = "ok",
        model_calls: int = 0,
    ) -> None:
        self.events = events
        self.outcome = outcome
        self.model_calls = model_calls


def build_backend(config: EngineConfig) -> Backend:
    kind = config.backend.kind
    if kind == "sim":
        return SimBackend(seed=config.seed, unsafe_marker=config.safety.unsafe_marker)
    if kind == "scripted":
        return ScriptedBackend(MockScript.from_file(config.backend.script_path))
    if kind == "http":
        return HttpBackend(
            endpoint=config.backend.endpoint,
            model=config.backend.model,
            token_env=config.backend.token_env,
        )
    raise ValueError(f"unknown backend kind {kind!r}")


class Engine:
    """One research session: queue, state keeper, workers, persistence."""

    def __init__(
        self,
        config: EngineConfig,
        *,
        session_id: str = "session",
        gateway: Optional[Backend] = None,
        literature: Optional[LiteratureSource] = None,
        log: Optional[object] = None,
        deterministic_clock: Optional[bool] = None,
        store: Optional[SessionStore] = None,
    ) -> None:
        self.config = config
        self.session_id = session_id
        self.gateway = gateway if gateway is not None else build_backend(config)
        self.literature = literature
        self.log = log if log is not None else InMemoryEventLog()
        if deterministic_clock is None:
            deterministic_clock = config.backend.kind != "http"
        self.clock = LogicalClock() if deterministic_clock else WallClock()
        self.weights = normalize_weights(config.weights)
        self.elo_params = EloParams(
            k_factor=config.elo.k_factor,
            initial_rating=config.elo.initial_rating,
            scale=config.elo.scale,
            base=config.elo.base,
            top_rank_debate_threshold=config.elo.top_rank_debate_threshold,
        )
        self.store = store or SessionStore(
            session_id=session_id,
            budgets=Budgets(
                max_matches=config.budgets.max_matches,
                max_hypotheses=config.budgets.max_hypotheses,
                max_model_calls=config.budgets.max_model_calls,
            ),
            rng_seed=config.seed,
        )
        self.lock = threading.RLock()
        self.event_listeners: list[Callable[[ContextMemoryEvent], None]] = []
        self.recent_events: list[ContextMemoryEvent] = []

    # -- event plumbing -------------------------------------------------

    def _materialize(self, proposals: Sequence[ProposedEvent]) -> list[ContextMemoryEvent]:
        events = []
        seq = self.store.last_seq
        for proposal in proposals:
            seq += 1
            events.append(
                ContextMemoryEvent(
                    seq=seq,
                    timestamp=self.clock.event_time(seq),
                    kind=proposal.kind,
                    body=proposal.body,
                )
            )
        return events

    def _resolve_specs(self, proposals: list[ProposedEvent]) -> list[ProposedEvent]:
        """Allocate task ids for handler-emitted enqueue specs at apply time."""
        resolved: list[ProposedEvent] = []
        converted = 0
        for proposal in proposals:
            if proposal.kind == EventKind.TASK_ENQUEUED and "spec" in proposal.body:
                spec = proposal.body["spec"]
                resolved.append(
                    self._enqueue_proposal(
                        TaskKind(spec["kind"]), spec.get("payload", {}), offset=converted
                    )
                )
                converted += 1
            else:
                resolved.append(proposal)
        return resolved

    def _apply_batch(self, proposals: list[ProposedEvent]) -> list[ContextMemoryEvent]:
        """Materialize, apply, wire follow-ups, and commit one atomic batch."""
        applied: list[ContextMemoryEvent] = []
        pending = list(proposals)
        while pending:
            events = self._materialize(self._resolve_specs(pending))
            for event in events:
                self.store.apply(event)
            applied.extend(events)
            pending = self._wire(events)
        pending_extra = self._wire_global()
        while pending_extra:
            events = self._materialize(self._resolve_specs(pending_extra))
            for event in events:
                self.store.apply(event)
            applied.extend(events)
            pending_extra = self._wire(events) + self._wire_global()
        if applied:
            applied[-1] = applied[-1].model_copy(update={"commit": True})
            self.log.append_batch(applied)
            self.recent_events.extend(applied)
            for listener in self.event_listeners:
                for event in applied:
                    listener(event)
        return applied

    # -- session lifecycle ------------------------------------------------

    def start_session(self, goal: ResearchGoal) -> str:
        """Persist the goal; enqueue safety review then goal parsing."""
        with self.lock:
            if self.store.goal is not None:
                raise EngineError("session already started")
            goal = goal.model_copy(
                update={"submitted_at": self.clock.record_time(0)}
            )
            proposals = [
                ProposedEvent(
                    EventKind.GOAL_RECORDED,
                    {"goal": goal.model_dump(mode="json"), "session_id": self.session_id},
                ),
                self._enqueue_proposal(
                    TaskKind.SAFETY_REVIEW, {"subject": "goal"}, offset=0
                ),
                self._enqueue_proposal(TaskKind.PARSE_GOAL, {}, offset=1),
            ]
            self._apply_batch(proposals)
            return self.session_id

    def _enqueue_proposal(
        self, kind: TaskKind, payload: dict, *, offset: int = 0, attempts: int = 0
    ) -> ProposedEvent:
        seq = self._next_task_seq() + offset
        task = Task(
            id=f"t-{seq:04d}",
            kind=kind,
            payload=payload,
            priority=TASK_PRIORITY[kind],
            enqueued_seq=seq,
            attempts=attempts,
        )
        return ProposedEvent(EventKind.TASK_ENQUEUED, {"task": task.model_dump(mode="json")})

    def _next_task_seq(self) -> int:
        highest = self.store.next_task_seq
        for queue in (self.store.pending_tasks, self.store.in_flight_tasks):
            for task in queue.values():
                highest = max(highest, task.enqueued_seq + 1)
        return highest

    # -- reservation helpers -----------------------------------------------

    def _reserved_hypothesis_base(self) -> int:
        base = self.store.next_hypothesis_seq
        for task in self.store.in_flight_tasks.values():
            for seq in task.payload.get("hypothesis_seqs", []):
                base = max(base, int(seq) + 1)
        return base

    def _reserved_review_base(self) -> int:
        base = self.store.next_review_seq
        for task in self.store.in_flight_tasks.values():
            if "review_seq" in task.payload:
                base = max(base, int(task.payload["review_seq"]) + 1)
        return base

    def _reserved_match_base(self) -> int:
        base = self.store.next_match_seq
        for task in self.store.in_flight_tasks.values():
            if "match_seq" in task.payload:
                base = max(base, int(task.payload["match_seq"]) + 1)
        return base

    # -- scheduling ----------------------------------------------------------

    def _dispatch_payload(self, task: Task) -> dict:
        """Pin ids and match pairs at dispatch time, under the keeper lock."""
        payload = dict(task.payload)
        if task.kind == TaskKind.REFLECT:
            payload["review_seq"] = self._reserved_review_base()
        elif task.kind == TaskKind.GENERATE:
            count = self.config.hypotheses_per_generation
            base = self._reserved_hypothesis_base()
            payload["hypothesis_seqs"] = list(range(base, base + count))
        elif task.kind == TaskKind.EVOLVE:
            payload["hypothesis_seqs"] = [self._reserved_hypothesis_base()]
        elif task.kind == TaskKind.RANK_MATCH and "pair" not in payload:
            active = self.store.active_hypotheses()
            excluded = self.store.in_flight_hypothesis_ids()
            try:
                schedule = schedule_matches(
                    active,
                    ProximityGraph(edges=dict(self.store.proximity_edges)),
                    self.elo_params,
                    derived_rng(self.store.rng_seed, "sched-pair", task.id),
                    batch_size=1,
                    matches_played=self.store.matches_played_map(),
                    excluded=excluded,
                )
            except InsufficientPopulation as exc:
                payload["skip"] = str(exc)
                return payload
            if not schedule.pairs:
                payload["skip"] = "no eligible pair"
                return payload
            pair = schedule.pairs[0]
            payload["pair"] = [pair.a, pair.b]
            payload["mode"] = pair.mode.value
            payload["reason"] = pair.reason
            payload["match_seq"] = self._reserved_match_base()
        return payload

    def step(self) -> bool:
        """Dispatch and execute one task; False when idle or halted."""
        with self.lock:
            if self.store.is_terminal() or self.store.phase == SessionPhase.PAUSED:
                return False
            rng = derived_rng(
                self.store.rng_seed, "sched-kind", self.store.tasks_started_total
            )
            task = next_task(self.weights, self.store, rng)
            if task is None:
                return False
            payload = self._dispatch_payload(task)
            task = task.model_copy(update={"payload": payload})
            batch: list[ProposedEvent] = [
                ProposedEvent(
                    EventKind.TASK_STARTED,
                    {"task_id": task.id, "kind": task.kind.value, "payload": payload},
                )
            ]
            try:
                result = self._execute(task)
                batch.extend(result.events)
                batch.append(
                    ProposedEvent(
                        EventKind.TASK_COMPLETED,
                        {
                            "task_id": task.id,
                            "outcome": result.outcome,
                            "model_calls": result.model_calls,
                        },
                    )
                )
            except EngineError as exc:
                batch.append(
                    ProposedEvent(
                        EventKind.TASK_FAILED,
                        {
                            "task_id": task.id,
                            "cause": f"{type(exc).__name__}: {exc}",
                            "model_calls": 0,
                        },
                    )
                )
                if task.attempts + 1 < self.config.max_attempts:
                    retry = task.model_copy(update={"attempts": task.attempts + 1})
                    batch.append(
                        ProposedEvent(
                            EventKind.TASK_ENQUEUED,
                            {"task": retry.model_dump(mode="json")},
                        )
                    )
                else:
                    batch.append(
                        ProposedEvent(
                            EventKind.TASK_DEAD_LETTERED,
                            {"task": task.model_dump(mode="json")},
                        )
                    )
            self._apply_batch(batch)
            return True

    def run(self, max_steps: Optional[int] = None) -> int:
        """Step until idle, terminal, or the step limit; returns steps taken."""
        steps = 0
        while max_steps is None or steps < max_steps:
            if not self.step():
                break
            steps += 1
        return steps

    def run_parallel(self, max_steps: Optional[int] = None) -> int:
        """Multi-worker execution: concurrent model calls, serial keeper.

        Tasks are dispatched under the lock (pinning pairs and id
        reservations), executed in a thread pool, and their batches applied
        in completion order. Used for throughput, not for byte-deterministic
        runs; the single-worker path is the reproducibility contract.
        """
        workers = self.config.worker_count
        if workers <= 1:
            return self.run(max_steps)
        steps = 0
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures: dict = {}
            while True:
                with self.lock:
                    while len(futures) < workers:
                        if self.store.is_terminal() or self.store.phase == SessionPhase.PAUSED:
                            break
                        if max_steps is not None and steps + len(futures) >= max_steps:
                            break
                        rng = derived_rng(
                            self.store.rng_seed,
                            "sched-kind",
                            self.store.tasks_started_total,
                        )
                        task = next_task(self.weights, self.store, rng)
                        if task is None:
                            break
                        payload = self._dispatch_payload(task)
                        task = task.model_copy(update={"payload": payload})
                        self._apply_batch(
                            [
                                ProposedEvent(
                                    EventKind.TASK_STARTED,
                                    {
                                        "task_id": task.id,
                                        "kind": task.kind.value,
                                        "payload": payload,
                                    },
                                )
                            ]
                        )
                        snapshot = self.store.clone()
                        futures[pool.submit(self._execute_on, snapshot, task)] = task
                if not futures:
                    break
                done, _ = wait(list(futures), return_when=FIRST_COMPLETED)
                for future in done:
                    task = futures.pop(future)
                    steps += 1
                    with self.lock:
                        batch: list[ProposedEvent] = []
                        try:
                            result = future.result()
                            batch.extend(result.events)
                            batch.append(
                                ProposedEvent(
                                    EventKind.TASK_COMPLETED,
                                    {
                                        "task_id": task.id,
                                        "outcome": result.outcome,
                                        "model_calls": result.model_calls,
                                    },
                                )
                            )
                        except EngineError as exc:
                            batch.append(
                                ProposedEvent(
                                    EventKind.TASK_FAILED,
                                    {
                                        "task_id": task.id,
                                        "cause": f"{type(exc).__name__}: {exc}",
                                        "model_calls": 0,
                                    },
                                )
                            )
                            if task.attempts + 1 < self.config.max_attempts:
                                retry = task.model_copy(
                                    update={"attempts": task.attempts + 1}
                                )
                                batch.append(
                                    ProposedEvent(
                                        EventKind.TASK_ENQUEUED,
                                        {"task": retry.model_dump(mode="json")},
                                    )
                                )
                            else:
                                batch.append(
                                    ProposedEvent(
                                        EventKind.TASK_DEAD_LETTERED,
                                        {"task": task.model_dump(mode="json")},
                                    )
                                )
                        try:
                            self._apply_batch(batch)
                        except EngineError:
                            self._apply_batch(
                                [
                                    ProposedEvent(
                                        EventKind.TASK_FAILED,
                                        {
                                            "task_id": task.id,
                                            "cause": "conflict on apply",
                                            "model_calls": 0,
                                        },
                                    )
                                ]
                            )
        return steps

    # -- worker execution -----------------------------------------------------

    def _execute(self, task: Task) -> HandlerResult:
        return self._execute_on(self.store, task)

    def _execute_on(self, store: SessionStore, task: Task) -> HandlerResult:
        handler = getattr(self, f"_task_{task.kind.value}", None)
        if handler is None:
            raise TaskFailed(f"no handler for task kind {task.kind.value}")
        try:
            return handler(store, task)
        except EngineError:
            raise
        except Exception as exc:  # noqa: BLE001 - workers surface as TaskFailed
            raise TaskFailed(f"{type(exc).__name__}: {exc}") from exc

    def run_worker_step(self, task: Task) -> HandlerResult:
        """Execute a task against the current store without applying events."""
        return self._execute(task)

    # individual task handlers ----------------------------------------------

    def _plan(self, store: SessionStore) -> ResearchPlanConfig:
        if store.plan is None:
            raise TaskFailed("no research plan parsed yet")
        return store.plan

    def _goal_text(self, store: SessionStore) -> str:
        if store.goal is None:
            raise MissingSession("no goal recorded for session")
        parts = [store.goal.goal_text]
        parts.extend(store.guidance)
        return "\n".join(parts)

    def _instructions(self, store: SessionStore) -> str:
        return "\n".join(store.guidance)

    def _task_parse_goal(self, store: SessionStore, task: Task) -> HandlerResult:
        from .gateway import AgentKind, ModelRequest

        goal_text = self._goal_text(store)
        refinement = task.payload.get("refinement", "")
        if refinement:
            goal_text = f"{goal_text}\n\nRefinement:\n{refinement}"
        response = self.gateway.complete(
            ModelRequest(
                agent_kind=AgentKind.SUPERVISOR,
                template_id="goal_parse",
                bindings={"goal": goal_text},
                trace_id=task.id,
            )
        )
        plan = _parse_plan(response.text)
        version = (store.plan.version + 1) if store.plan else 1
        if refinement and store.plan:
            preferences = f"{plan.preferences}\nRefinement: {refinement}"
            plan = plan.model_copy(update={"preferences": preferences})
        plan = plan.model_copy(update={"version": version})
        return HandlerResult(
            [ProposedEvent(EventKind.PLAN_UPDATED, {"plan": plan.model_dump(mode="json")})],
            model_calls=1,
        )

    def _task_safety_review(self, store: SessionStore, task: Task) -> HandlerResult:
        subject = task.payload.get("subject", "goal")
        now = self.clock.record_time(store.tasks_started_total)
        events: list[ProposedEvent] = []
        calls = 0
        if subject == "goal":
            if store.goal is None:
                raise MissingSession("no goal recorded")
            if not self.config.safety.enabled:
                decision = safety_agent.SafetyDecision(
                    subject=safety_agent.SafetySubject.GOAL,
                    verdict=SafetyVerdict.APPROVED,
                    reasoning="safety checks disabled by configuration",
                    reviewed_at=now,
                    subject_id="goal",
                )
            else:
                decision, calls = safety_agent.review_goal_safety(
                    store.goal, self.gateway, reviewed_at=now
                )
            events.append(
                ProposedEvent(
                    EventKind.SAFETY_DECISION, {"decision": decision.model_dump(mode="json")}
                )
            )
            if decision.verdict == SafetyVerdict.REJECTED:
                events.append(
                    ProposedEvent(
                        EventKind.SESSION_STATE_CHANGED,
                        {"phase": SessionPhase.TERMINAL_REJECTED_UNSAFE.value},
                    )
                )
        else:
            hypothesis = store.hypotheses.get(task.payload.get("hypothesis_id", ""))
            if hypothesis is None:
                raise TaskFailed("hypothesis vanished before safety review")
            if hypothesis.state not in (
                HypothesisState.UNDER_INITIAL_REVIEW,
                HypothesisState.UNDER_FULL_REVIEW,
            ):
                return HandlerResult([], outcome="skipped: not pre-tournament")
            if not self.config.safety.enabled:
                decision = safety_agent.SafetyDecision(
                    subject=safety_agent.SafetySubject.HYPOTHESIS,
                    verdict=SafetyVerdict.APPROVED,
                    reasoning="safety checks disabled by configuration",
                    reviewed_at=now,
                    subject_id=hypothesis.id,
                )
            else:
                decision, calls = safety_agent.review_hypothesis_safety(
                    hypothesis, self.gateway, goal=self._goal_text(store), reviewed_at=now
                )
            events.append(
                ProposedEvent(
                    EventKind.SAFETY_DECISION, {"decision": decision.model_dump(mode="json")}
                )
            )
            if decision.verdict == SafetyVerdict.REJECTED:
                events.append(
                    ProposedEvent(
                        EventKind.HYPOTHESIS_STATE_CHANGED,
                        {
                            "hypothesis_id": hypothesis.id,
                            "event": LifecycleEvent.FLAGGED_UNSAFE.value,
                        },
                    )
                )
        return HandlerResult(events, model_calls=calls)

    def _generation_context(
        self, store: SessionStore, task: Task, include_critique: bool
    ) -> GenerationContext:
        critique = store.latest_critique()
        overview = store.latest_overview()
        summaries = tuple(
            (h.id, h.summary or h.content[:120])
            for h in sorted(store.hypotheses.values(), key=lambda h: h.created_seq)
            if h.state
            in (HypothesisState.DRAFT, HypothesisState.ACTIVE_IN_TOURNAMENT)
        )
        return GenerationContext(
            plan=self._plan(store),
            goal=self._goal_text(store),
            meta_critique=critique.body if (critique and include_critique) else None,
            overview=overview.body if overview else None,
            existing_summaries=summaries,
            instructions=self._instructions(store),
        )

    def _remaining_hypothesis_budget(self, store: SessionStore) -> int:
        return store.budgets.max_hypotheses - store.consumed.max_hypotheses

    def _hypothesis_events(
        self,
        store: SessionStore,
        task: Task,
        proposals: Sequence[generation_agent.HypothesisProposal],
    ) -> list[ProposedEvent]:
        events = []
        seqs = task.payload.get("hypothesis_seqs", [])
        for proposal, seq in zip(proposals, seqs):
            hypothesis = Hypothesis.create(
                id=f"h-{int(seq):04d}",
                session_id=store.session_id,
                content=proposal.content,
                origin=proposal.origin,
                created_seq=int(seq),
                summary=proposal.summary,
                category=proposal.category,
                parent_ids=proposal.parent_ids,
            )
            events.append(
                ProposedEvent(
                    EventKind.HYPOTHESIS_CREATED,
                    {"hypothesis": hypothesis.model_dump(mode="json")},
                )
            )
        return events

    def _task_generate(self, store: SessionStore, task: Task) -> HandlerResult:
        remaining = self._remaining_hypothesis_budget(store)
        if remaining <= 0:
            return HandlerResult([], outcome="skipped: hypothesis budget exhausted")
        count = min(
            len(task.payload.get("hypothesis_seqs", [])) or self.config.hypotheses_per_generation,
            remaining,
        )
        include_critique = True
        if store.latest_critique() is not None:
            flip = derived_rng(store.rng_seed, "critique", task.id).random()
            include_critique = flip < self.config.critique_injection_fraction
        ctx = self._generation_context(store, task, include_critique)
        strategy = task.payload.get("strategy")
        if not strategy:
            options = ["literature", "debate", "assumptions"]
            if ctx.overview:
                options.append("expansion")
            strategy = options[
                derived_rng(store.rng_seed, "gen-strategy", task.id).randrange(len(options))
            ]
        calls = 0
        proposals: list[generation_agent.HypothesisProposal] = []
        if strategy == "literature":
            proposals, calls = generation_agent.generate_from_literature(
                ctx,
                self.gateway,
                self.literature,
                count=count,
                max_iterations=self.config.max_literature_iterations,
                trace_id=task.id,
            )
        elif strategy == "debate":
            proposal, calls, _turns = generation_agent.generate_via_debate(
                ctx, self.gateway, trace_id=task.id
            )
            proposals = [proposal]
        elif strategy == "assumptions":
            proposals, calls = generation_agent.generate_via_assumptions(
                ctx, self.gateway, trace_id=task.id
            )
        elif strategy == "expansion":
            proposals, calls = generation_agent.generate_via_expansion(
                ctx, self.gateway, count=min(count, 2), trace_id=task.id
            )
        else:
            raise TaskFailed(f"unknown generation strategy {strategy!r}")
        events = self._hypothesis_events(store, task, proposals[:remaining])
        return HandlerResult(events, model_calls=calls, outcome=f"strategy={strategy}")

    def _task_reflect(self, store: SessionStore, task: Task) -> HandlerResult:
        hypothesis = store.hypotheses.get(task.payload.get("hypothesis_id", ""))
        if hypothesis is None:
            raise TaskFailed("hypothesis vanished before review")
        kind = ReviewKind(task.payload.get("review_kind", "initial"))
        review_id = f"r-{int(task.payload['review_seq']):04d}"
        critique = store.latest_critique()
        req = ReviewRequest(
            hypothesis=hypothesis,
            kind=kind,
            plan=self._plan(store),
            goal=self._goal_text(store),
            meta_critique=critique.body if critique else None,
            tournament_digest=task.payload.get("digest"),
        )
        events: list[ProposedEvent] = []
        calls = 0
        if kind == ReviewKind.INITIAL:
            if hypothesis.state != HypothesisState.DRAFT:
                return HandlerResult([], outcome="skipped: not a draft")
            events.append(
                ProposedEvent(
                    EventKind.HYPOTHESIS_STATE_CHANGED,
                    {
                        "hypothesis_id": hypothesis.id,
                        "event": LifecycleEvent.BEGIN_INITIAL_REVIEW.value,
                    },
                )
            )
            review, calls = reflection_agent.initial_review(
                req,
                self.gateway,
                review_id=review_id,
                reject_threshold=self.config.initial_reject_threshold,
            )
            events.append(
                ProposedEvent(EventKind.REVIEW_ADDED, {"review": review.model_dump(mode="json")})
            )
            outcome_event = (
                LifecycleEvent.INITIAL_REVIEW_PASSED
                if review.verdict == ReviewVerdict.ACCEPT
                else LifecycleEvent.INITIAL_REVIEW_FAILED
            )
            events.append(
                ProposedEvent(
                    EventKind.HYPOTHESIS_STATE_CHANGED,
                    {"hypothesis_id": hypothesis.id, "event": outcome_event.value},
                )
            )
        elif kind == ReviewKind.FULL:
            if hypothesis.state != HypothesisState.UNDER_FULL_REVIEW:
                return HandlerResult([], outcome="skipped: not under full review")
            review, calls = reflection_agent.full_review(
                req, self.gateway, self.literature, review_id=review_id
            )
            events.append(
                ProposedEvent(EventKind.REVIEW_ADDED, {"review": review.model_dump(mode="json")})
            )
        elif kind == ReviewKind.DEEP_VERIFICATION:
            if hypothesis.state not in (
                HypothesisState.ACTIVE_IN_TOURNAMENT,
                HypothesisState.UNDER_FULL_REVIEW,
            ):
                return HandlerResult([], outcome="skipped: hypothesis not reviewable")
            review, calls = reflection_agent.deep_verification_review(
                req, self.gateway, review_id=review_id
            )
            events.append(
                ProposedEvent(EventKind.REVIEW_ADDED, {"review": review.model_dump(mode="json")})
            )
        elif kind == ReviewKind.OBSERVATION:
            articles: list[tuple[str, str]] = []
            if self.literature is not None:
                try:
                    hits = self.literature.search(
                        hypothesis.summary or hypothesis.content[:200], limit=2
                    )
                    articles = [(h.doc_id, self.literature.fetch(h.doc_id)) for h in hits]
                except SourceUnavailable:
                    articles = []
            if not articles:
                return HandlerResult([], outcome="skipped: no articles available")
            review, annotation, calls = reflection_agent.observation_review(
                req, self.gateway, articles, review_id=review_id
            )
            events.append(
                ProposedEvent(EventKind.REVIEW_ADDED, {"review": review.model_dump(mode="json")})
            )
            if annotation:
                events.append(
                    ProposedEvent(
                        EventKind.ANNOTATION_ADDED,
                        {"hypothesis_id": hypothesis.id, "text": annotation},
                    )
                )
        elif kind == ReviewKind.SIMULATION:
            review, calls = reflection_agent.simulation_review(
                req, self.gateway, review_id=review_id
            )
            events.append(
                ProposedEvent(EventKind.REVIEW_ADDED, {"review": review.model_dump(mode="json")})
            )
        elif kind == ReviewKind.TOURNAMENT_RECURRENT:
            review, calls = reflection_agent.tournament_recurrent_review(
                req, self.gateway, review_id=review_id
            )
            events.append(
                ProposedEvent(EventKind.REVIEW_ADDED, {"review": review.model_dump(mode="json")})
            )
        else:
            raise TaskFailed(f"unsupported review kind {kind.value}")
        return HandlerResult(events, model_calls=calls, outcome=f"review={kind.value}")

    def _task_rank_match(self, store: SessionStore, task: Task) -> HandlerResult:
        if "skip" in task.payload:
            return HandlerResult([], outcome=f"skipped: {task.payload['skip']}")
        if store.consumed.max_matches >= store.budgets.max_matches:
            return HandlerResult([], outcome="skipped: match budget exhausted")
        pair_ids = task.payload["pair"]
        hyp_a = store.hypotheses.get(pair_ids[0])
        hyp_b = store.hypotheses.get(pair_ids[1])
        if not hyp_a or not hyp_b:
            raise TaskFailed("match participant vanished")
        if (
            hyp_a.state != HypothesisState.ACTIVE_IN_TOURNAMENT
            or hyp_b.state != HypothesisState.ACTIVE_IN_TOURNAMENT
        ):
            return HandlerResult([], outcome="skipped: participant not active")
        pair = ScheduledPair(
            a=hyp_a.id,
            b=hyp_b.id,
            mode=MatchMode(task.payload.get("mode", "single_turn")),
            reason=task.payload.get("reason", ""),
        )
        plan = self._plan(store)

        def latest_review_body(h: Hypothesis) -> str:
            reviews = store.reviews_of(h.id)
            return reviews[-1].body if reviews else "(no review on file)"

        match_id = f"m-{int(task.payload['match_seq']):04d}"
        match, calls = run_match(
            match_id,
            pair,
            hyp_a,
            hyp_b,
            self.gateway,
            self.elo_params,
            goal=self._goal_text(store),
            preferences=plan.preferences,
            idea_attributes=plan.idea_attributes(),
            review_a=latest_review_body(hyp_a),
            review_b=latest_review_body(hyp_b),
        )
        return HandlerResult(
            [ProposedEvent(EventKind.MATCH_COMPLETED, {"match": match.model_dump(mode="json")})],
            model_calls=calls,
        )

    def _task_proximity_update(self, store: SessionStore, task: Task) -> HandlerResult:
        active = store.active_hypotheses()
        graph = ProximityGraph(edges=dict(store.proximity_edges))
        missing = graph.missing_pairs([h.id for h in active])[:10]
        edges: dict[str, float] = {}
        calls = 0
        for a_id, b_id in missing:
            hyp_a, hyp_b = store.hypotheses[a_id], store.hypotheses[b_id]
            if self.config.proximity.metric == "jaccard":
                value = jaccard_similarity(hyp_a, hyp_b)
            else:
                value, used = compute_similarity(
                    hyp_a, hyp_b, self.gateway, goal=self._goal_text(store), trace_id=task.id
                )
                calls += used
            edges[ProximityGraph.edge_key(a_id, b_id)] = value
        events: list[ProposedEvent] = []
        if edges:
            events.append(ProposedEvent(EventKind.PROXIMITY_UPDATED, {"edges": edges}))
        merged = dict(store.proximity_edges)
        merged.update(edges)
        clusters = dedup_clusters(
            ProximityGraph(edges=merged), self.config.proximity.dedup_threshold
        )
        active_ids = {h.id for h in active}
        played = store.matches_played_map()

        def elo_of(hid: str) -> Optional[float]:
            if hid not in active_ids:
                return None
            return store.hypotheses[hid].elo

        min_matches = self.config.proximity.dedup_min_matches
        margin = self.config.proximity.dedup_retire_margin
        for cluster in clusters:
            rated = sorted(
                ((elo_of(hid), hid) for hid in cluster if elo_of(hid) is not None),
                key=lambda pair: (-pair[0], pair[1]),
            )
            if len(rated) < 2:
                continue
            best_elo = rated[0][0]
            for elo, doomed in rated[1:]:
                if played.get(doomed, 0) < min_matches:
                    continue
                if best_elo - elo < margin:
                    continue
                events.append(
                    ProposedEvent(
                        EventKind.HYPOTHESIS_STATE_CHANGED,
                        {
                            "hypothesis_id": doomed,
                            "event": LifecycleEvent.RETIRE.value,
                            "reason": "duplicate",
                        },
                    )
                )
        return HandlerResult(events, model_calls=calls)

    def _task_evolve(self, store: SessionStore, task: Task) -> HandlerResult:
        if self._remaining_hypothesis_budget(store) <= 0:
            return HandlerResult([], outcome="skipped: hypothesis budget exhausted")
        active = store.active_hypotheses()
        strategy_name = task.payload.get("strategy")
        rng = derived_rng(store.rng_seed, "evo", task.id)
        if strategy_name:
            strategy = EvolutionStrategy(strategy_name)
        else:
            strategies = list(EvolutionStrategy)
            raw = self.config.evolution_strategy_weights
            weights = [max(0.0, float(raw.get(s.value, 1.0))) for s in strategies]
            total = sum(weights) or float(len(strategies))
            point = rng.random() * total
            acc = 0.0
            strategy = strategies[-1]
            for candidate, weight in zip(strategies, weights):
                acc += weight
                if point <= acc:
                    strategy = candidate
                    break
        arity = evolution_agent.required_arity(strategy)
        if len(active) < arity:
            return HandlerResult([], outcome="skipped: not enough active hypotheses")
        parent_ids = task.payload.get("parent_ids") or evolution_agent.select_evolution_parents(
            active, strategy, rng, combination_parents=self.config.combination_parents
        )
        parents = [store.hypotheses[pid] for pid in parent_ids]
        directive = EvolutionDirective(
            strategy=strategy, parent_ids=tuple(parent_ids), plan=self._plan(store)
        )
        proposal, calls = evolution_agent.evolve(
            directive, parents, self.gateway, goal=self._goal_text(store), trace_id=task.id
        )
        events = self._hypothesis_events(store, task, [proposal])
        return HandlerResult(events, model_calls=calls, outcome=f"strategy={strategy.value}")

    def _task_meta_review(self, store: SessionStore, task: Task) -> HandlerResult:
        reviews = sorted(store.reviews.values(), key=lambda r: r.id)
        if not reviews:
            return HandlerResult([], outcome="skipped: no reviews yet")
        matches = sorted(store.matches.values(), key=lambda m: m.id)
        plan = self._plan(store)
        critique, calls = meta_review_agent.synthesize_meta_critique(
            reviews,
            [m.transcript for m in matches],
            self.gateway,
            goal=self._goal_text(store),
            preferences=plan.preferences,
            instructions=self._instructions(store),
            version=len(store.critiques) + 1,
            created_at=self.clock.record_time(store.tasks_started_total),
            window=self.config.meta_review_window,
            source_match_ids=[m.id for m in matches[-self.config.meta_review_window :]],
        )
        events = [
            ProposedEvent(
                EventKind.META_CRITIQUE_UPDATED,
                {"critique": critique.model_dump(mode="json")},
            )
        ]
        if matches:
            digest, digest_calls = meta_review_agent.build_tournament_digest(
                matches, self.gateway, max_chars=self.config.digest_max_chars
            )
            calls += digest_calls
            top = store.hypotheses_by_elo()
            if top:
                events.append(
                    ProposedEvent(
                        EventKind.TASK_ENQUEUED,
                        {
                            "spec": {
                                "kind": TaskKind.REFLECT.value,
                                "payload": {
                                    "hypothesis_id": top[0].id,
                                    "review_kind": ReviewKind.TOURNAMENT_RECURRENT.value,
                                    "digest": digest,
                                },
                            }
                        },
                    )
                )
        return HandlerResult(events, model_calls=calls)

    def _task_overview(self, store: SessionStore, task: Task) -> HandlerResult:
        active = store.hypotheses_by_elo()
        if not active:
            return HandlerResult([], outcome="skipped: no active hypotheses")
        plan = self._plan(store)
        top = active[: min(10, len(active))]
        overview, calls = meta_review_agent.generate_research_overview(
            top,
            self.gateway,
            goal=self._goal_text(store),
            preferences=plan.preferences,
            version=len(store.overviews) + 1,
        )
        events = [
            ProposedEvent(
                EventKind.OVERVIEW_UPDATED, {"overview": overview.model_dump(mode="json")}
            )
        ]
        try:
            contacts, contact_calls = meta_review_agent.suggest_research_contacts(
                overview,
                self.gateway,
                goal=self._goal_text(store),
                redact=self.config.safety.redact_contacts,
            )
            calls += contact_calls
            events.append(
                ProposedEvent(
                    EventKind.CONTACTS_UPDATED,
                    {"contacts": [c.model_dump(mode="json") for c in contacts]},
                )
            )
        except EngineError:
            pass
        if self.config.safety.enabled:
            now = self.clock.record_time(store.tasks_started_total)
            try:
                decision, monitor_calls = safety_agent.monitor_directions(
                    overview.body,
                    self.gateway,
                    goal=self._goal_text(store),
                    reviewed_at=now,
                    overview_id=f"overview-v{overview.version}",
                )
                calls += monitor_calls
                events.append(
                    ProposedEvent(
                        EventKind.SAFETY_DECISION,
                        {"decision": decision.model_dump(mode="json")},
                    )
                )
                if decision.verdict == SafetyVerdict.REJECTED:
                    events.append(
                        ProposedEvent(
                            EventKind.SAFETY_ALERT,
                            {
                                "subject": f"overview-v{overview.version}",
                                "reasoning": decision.reasoning,
                                "raised_at": now,
                            },
                        )
                    )
            except EngineError:
                pass
        return HandlerResult(events, model_calls=calls)

    # -- follow-up wiring -------------------------------------------------

    def _wire(self, applied: list[ContextMemoryEvent]) -> list[ProposedEvent]:
        """Deterministic follow-ups computed from the post-application store."""
        proposals: list[ProposedEvent] = []
        offset = 0

        def enqueue(kind: TaskKind, payload: dict) -> None:
            nonlocal offset
            proposals.append(self._enqueue_proposal(kind, payload, offset=offset))
            offset += 1

        store = self.store
        for event in applied:
            if event.kind == EventKind.PLAN_UPDATED and store.phase == SessionPhase.PARSING:
                if self._goal_approved():
                    proposals.append(
                        ProposedEvent(
                            EventKind.SESSION_STATE_CHANGED,
                            {"phase": SessionPhase.RUNNING.value},
                        )
                    )
                    for _ in range(self.config.initial_generation_tasks):
                        enqueue(TaskKind.GENERATE, {})
            elif event.kind == EventKind.HYPOTHESIS_CREATED:
                hid = event.body["hypothesis"]["id"]
                hyp = store.hypotheses.get(hid)
                if hyp is not None and hyp.state == HypothesisState.DRAFT:
                    enqueue(
                        TaskKind.REFLECT,
                        {"hypothesis_id": hid, "review_kind": ReviewKind.INITIAL.value},
                    )
            elif event.kind == EventKind.HYPOTHESIS_STATE_CHANGED:
                hid = event.body["hypothesis_id"]
                hyp = store.hypotheses.get(hid)
                if hyp is None:
                    continue
                if event.body["event"] == LifecycleEvent.INITIAL_REVIEW_PASSED.value:
                    if self.config.safety.enabled:
                        enqueue(
                            TaskKind.SAFETY_REVIEW,
                            {"subject": "hypothesis", "hypothesis_id": hid},
                        )
                    enqueue(
                        TaskKind.REFLECT,
                        {"hypothesis_id": hid, "review_kind": ReviewKind.FULL.value},
                    )
                elif event.body["event"] == LifecycleEvent.ADMITTED_TO_TOURNAMENT.value:
                    self._wire_admission_feats(hid, enqueue)
            elif event.kind == EventKind.REVIEW_ADDED:
                review = Review(**event.body["review"])
                proposals.extend(self._wire_review(review, enqueue))
            elif event.kind == EventKind.SAFETY_DECISION:
                decision = event.body["decision"]
                if decision.get("subject") == "hypothesis" and decision.get("verdict") == "approved":
                    admission = self._admission_event(decision.get("subject_id", ""))
                    if admission:
                        proposals.append(admission)
                elif (
                    decision.get("subject") == "goal"
                    and decision.get("verdict") == "approved"
                    and store.phase == SessionPhase.PARSING
                    and store.plan is not None
                ):
                    proposals.append(
                        ProposedEvent(
                            EventKind.SESSION_STATE_CHANGED,
                            {"phase": SessionPhase.RUNNING.value},
                        )
                    )
                    for _ in range(self.config.initial_generation_tasks):
                        enqueue(TaskKind.GENERATE, {})
            elif event.kind == EventKind.MATCH_COMPLETED:
                proposals.extend(self._wire_match(enqueue))
            elif event.kind == EventKind.META_CRITIQUE_UPDATED:
                if store.active_hypotheses() and not self._queued_or_running(TaskKind.OVERVIEW):
                    enqueue(TaskKind.OVERVIEW, {})
            elif event.kind == EventKind.OVERVIEW_UPDATED:
                if (
                    self._remaining_hypothesis_budget(store) > 0
                    and len(store.pending_by_kind(TaskKind.GENERATE)) == 0
                ):
                    enqueue(TaskKind.GENERATE, {"strategy": "expansion"})
        return proposals

    def _wire_admission_feats(self, hid: str, enqueue: Callable[[TaskKind, dict], None]) -> None:
        store = self.store
        active = store.active_hypotheses()
        if len(active) >= 2 and store.consumed.max_matches < store.budgets.max_matches:
            pending_matches = len(store.pending_by_kind(TaskKind.RANK_MATCH))
            in_flight_matches = sum(
                1 for t in store.in_flight_tasks.values() if t.kind == TaskKind.RANK_MATCH
            )
            if pending_matches + in_flight_matches < max(2, len(active) // 2):
                enqueue(TaskKind.RANK_MATCH, {})
        if not self._queued_or_running(TaskKind.PROXIMITY_UPDATE) and len(active) >= 2:
            enqueue(TaskKind.PROXIMITY_UPDATE, {})
        flip = derived_rng(store.rng_seed, "extra-review", hid).random()
        if flip < self.config.extra_review_fraction:
            extra_kinds = (
                ReviewKind.DEEP_VERIFICATION,
                ReviewKind.SIMULATION,
                ReviewKind.OBSERVATION,
            )
            pick = derived_rng(store.rng_seed, "extra-review-kind", hid).randrange(
                len(extra_kinds)
            )
            enqueue(
                TaskKind.REFLECT,
                {"hypothesis_id": hid, "review_kind": extra_kinds[pick].value},
            )

    def _goal_approved(self) -> bool:
        return any(
            d.subject.value == "goal" and d.verdict == SafetyVerdict.APPROVED
            for d in self.store.safety_decisions
        )

    def _queued_or_running(self, kind: TaskKind) -> bool:
        if self.store.pending_by_kind(kind):
            return True
        return any(t.kind == kind for t in self.store.in_flight_tasks.values())

    def _admission_event(self, hid: str) -> Optional[ProposedEvent]:
        """Admit when initial-accept + full review + safety approval all hold."""
        store = self.store
        hyp = store.hypotheses.get(hid)
        if hyp is None or hyp.state != HypothesisState.UNDER_FULL_REVIEW:
            return None
        reviews = store.reviews_of(hid)
        initial_ok = any(
            r.kind == ReviewKind.INITIAL and r.verdict == ReviewVerdict.ACCEPT
            for r in reviews
        )
        full_ok = any(r.kind == ReviewKind.FULL for r in reviews)
        if not (initial_ok and full_ok):
            return None
        if self.config.safety.enabled:
            approved = any(
                d.subject.value == "hypothesis"
                and d.subject_id == hid
                and d.verdict == SafetyVerdict.APPROVED
                for d in store.safety_decisions
            )
            if not approved:
                return None
        return ProposedEvent(
            EventKind.HYPOTHESIS_STATE_CHANGED,
            {"hypothesis_id": hid, "event": LifecycleEvent.ADMITTED_TO_TOURNAMENT.value},
        )

    def _wire_review(
        self, review: Review, enqueue: Callable[[TaskKind, dict], None]
    ) -> list[ProposedEvent]:
        proposals: list[ProposedEvent] = []
        store = self.store
        if review.kind == ReviewKind.FULL:
            admission = self._admission_event(review.hypothesis_id)
            if admission:
                proposals.append(admission)
        if review.kind == ReviewKind.DEEP_VERIFICATION and review.verdict == ReviewVerdict.REJECT:
            hyp = store.hypotheses.get(review.hypothesis_id)
            if hyp is not None and hyp.state == HypothesisState.ACTIVE_IN_TOURNAMENT:
                proposals.append(
                    ProposedEvent(
                        EventKind.HYPOTHESIS_STATE_CHANGED,
                        {
                            "hypothesis_id": hyp.id,
                            "event": LifecycleEvent.RETIRE.value,
                            "reason": "fatal assumption",
                        },
                    )
                )
        if (
            store.reviews_since_meta >= self.config.meta_review_every_reviews
            and not self._queued_or_running(TaskKind.META_REVIEW)
        ):
            enqueue(TaskKind.META_REVIEW, {})
        return proposals

    def _wire_match(self, enqueue: Callable[[TaskKind, dict], None]) -> list[ProposedEvent]:
        store = self.store
        proposals: list[ProposedEvent] = []
        remaining_matches = store.budgets.max_matches - store.consumed.max_matches
        active = store.active_hypotheses()
        if remaining_matches > 0 and len(active) >= 2:
            pending = len(store.pending_by_kind(TaskKind.RANK_MATCH))
            in_flight = sum(
                1 for t in store.in_flight_tasks.values() if t.kind == TaskKind.RANK_MATCH
            )
            if pending + in_flight < max(2, len(active) // 2):
                enqueue(TaskKind.RANK_MATCH, {})
        # Creation is front loaded: the final stretch of the match budget is
        # pure tournament so late entrants still converge.
        within_horizon = store.consumed.max_matches <= (
            self.config.evolve_match_horizon * store.budgets.max_matches
        )
        if (
            within_horizon
            and store.consumed.max_matches % self.config.evolve_every_matches == 0
            and self._remaining_hypothesis_budget(store) > 0
            and active
        ):
            enqueue(TaskKind.EVOLVE, {})
        if (
            store.matches_since_meta >= self.config.meta_review_every_matches
            and not self._queued_or_running(TaskKind.META_REVIEW)
            and store.reviews
        ):
            enqueue(TaskKind.META_REVIEW, {})
        return proposals

    def _wire_global(self) -> list[ProposedEvent]:
        store = self.store
        proposals: list[ProposedEvent] = []
        if store.phase == SessionPhase.RUNNING:
            exhausted = store.consumed.exhausted_against(store.budgets)
            if exhausted:
                proposals.append(
                    ProposedEvent(
                        EventKind.SESSION_STATE_CHANGED,
                        {
                            "phase": SessionPhase.TERMINAL_BUDGET_EXHAUSTED.value,
                            "exhausted": exhausted,
                        },
                    )
                )
                return proposals
        if (
            store.phase == SessionPhase.RUNNING
            and not store.pending_tasks
            and not store.in_flight_tasks
            and self._remaining_hypothesis_budget(store) > 0
        ):
            # The session runs continuously until a budget is exhausted or
            # the expert stops it; an empty queue replenishes generation.
            proposals.append(self._enqueue_proposal(TaskKind.GENERATE, {}))
        if (
            store.phase in (SessionPhase.PARSING, SessionPhase.RUNNING)
            and store.tasks_since_stats >= self.config.stats_every_tasks
        ):
            stats = compute_stats(store, top_k=self.config.top_k_stats)
            proposals.append(
                ProposedEvent(
                    EventKind.STATS_SNAPSHOT, {"stats": stats.model_dump(mode="json")}
                )
            )
        return proposals

    # -- expert-in-the-loop operations ------------------------------------

    def _ensure_not_terminal(self) -> None:
        if self.store.is_terminal():
            raise SessionTerminal(f"session is {self.store.phase.value}")

    def submit_expert_review(
        self,
        hypothesis_id: str,
        *,
        scores: dict[str, int],
        verdict: str,
        text: str,
        actor: str = "expert",
    ) -> Review:
        with self.lock:
            if hypothesis_id not in self.store.hypotheses:
                raise MissingSession(f"unknown hypothesis {hypothesis_id}")
            review = Review(
                id=f"r-{self._reserved_review_base():04d}",
                hypothesis_id=hypothesis_id,
                kind=ReviewKind.EXPERT,
                verdict=ReviewVerdict(verdict),
                body=text,
                scores=scores,
                author=actor,
            )
            self._apply_batch(
                [ProposedEvent(EventKind.REVIEW_ADDED, {"review": review.model_dump(mode="json")})]
            )
            return review

    def contribute_hypothesis(
        self, content: str, *, provenance_tag: str = "", actor: str = "expert"
    ) -> Hypothesis:
        with self.lock:
            self._ensure_not_terminal()
            if not content.strip():
                raise ValueError("hypothesis content must be non-empty")
            seq = self._reserved_hypothesis_base()
            hypothesis = Hypothesis.create(
                id=f"h-{seq:04d}",
                session_id=self.store.session_id,
                content=content,
                origin=HypothesisOrigin.EXPERT_CONTRIBUTED,
                created_seq=seq,
                summary=content.strip().splitlines()[0][:160],
                provenance_tag=provenance_tag,
            )
            self._apply_batch(
                [
                    ProposedEvent(
                        EventKind.HYPOTHESIS_CREATED,
                        {"hypothesis": hypothesis.model_dump(mode="json")},
                    )
                ]
            )
            return hypothesis

    def refine_goal(self, text: str) -> int:
        """Queue a re-parse with the refinement; returns the upcoming version."""
        with self.lock:
            self._ensure_not_terminal()
            if not text.strip():
                raise ValueError("refinement text must be non-empty")
            self._apply_batch(
                [self._enqueue_proposal(TaskKind.PARSE_GOAL, {"refinement": text})]
            )
            return (self.store.plan.version + 1) if self.store.plan else 1

    def add_guidance(self, text: str) -> None:
        with self.lock:
            self._ensure_not_terminal()
            if not text.strip():
                raise ValueError("guidance text must be non-empty")
            self._apply_batch([ProposedEvent(EventKind.GUIDANCE_ADDED, {"text": text})])

    def control(self, action: str) -> SessionPhase:
        with self.lock:
            phase = self.store.phase
            legal = {
                "pause": {SessionPhase.PARSING, SessionPhase.RUNNING},
                "resume": {SessionPhase.PAUSED},
                "stop": {SessionPhase.PARSING, SessionPhase.RUNNING, SessionPhase.PAUSED},
            }
            if action not in legal:
                raise ValueError(f"unknown control action {action!r}")
            if phase not in legal[action]:
                raise SessionTerminal(f"cannot {action} from {phase.value}")
            target = {
                "pause": SessionPhase.PAUSED,
                "resume": SessionPhase.RUNNING,
                "stop": SessionPhase.TERMINAL_COMPLETE,
            }[action]
            body = {"phase": target.value}
            if action == "stop":
                body["stop_requested"] = True
            self._apply_batch([ProposedEvent(EventKind.SESSION_STATE_CHANGED, body)])
            return self.store.phase

    def stats(self) -> SessionStats:
        with self.lock:
            return compute_stats(self.store, top_k=self.config.top_k_stats)

    def is_terminal_decision(self) -> SessionPhase:
        """Terminal policy: budgets exhausted or an explicit stop request."""
        with self.lock:
            if self.store.phase != SessionPhase.RUNNING:
                return self.store.phase
            if self.store.consumed.exhausted_against(self.store.budgets):
                return SessionPhase.TERMINAL_BUDGET_EXHAUSTED
            if self.store.stop_requested:
                return SessionPhase.TERMINAL_COMPLETE
            return SessionPhase.RUNNING

    # -- persistence ---------------------------------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            return self.store.to_checkpoint()

    def save_checkpoint(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = self.snapshot()
        path.write_text(json.dumps(blob, sort_keys=True, indent=1))
        return path

    @classmethod
    def restore(
        cls,
        config: EngineConfig,
        checkpoint: dict,
        tail: Sequence[ContextMemoryEvent],
        **engine_kwargs: object,
    ) -> "Engine":
        store = SessionStore.from_checkpoint(checkpoint)
        verify_tail_contiguous(list(tail), store.last_seq)
        for event in tail:
            store.apply(event)
        return cls(config, session_id=store.session_id, store=store, **engine_kwargs)

    @classmethod
    def replay(
        cls,
        config: EngineConfig,
        events: Sequence[ContextMemoryEvent],
        *,
        session_id: str = "session",
        **engine_kwargs: object,
    ) -> "Engine":
        engine = cls(config, session_id=session_id, **engine_kwargs)
        verify_tail_contiguous(list(events), 0)
        for event in events:
            engine.store.apply(event)
        engine.session_id = engine.store.session_id
        return engine


def _parse_plan(text: str) -> ResearchPlanConfig:
    """Parse the goal-parse completion; heuristic fallback on bad JSON."""
    cleaned = text.strip()
    fence = re.search(r"```(?:json)?\s*\n(.*?)\n\s*```", cleaned, re.DOTALL)
    if fence:
        cleaned = fence.group(1)
    try:
        data = json.loads(cleaned)
        criteria = tuple(
            {"name": c.get("name", ""), "rubric": c.get("rubric", "")}
            for c in data.get("evaluation_criteria", [])
            if c.get("name")
        )
        return ResearchPlanConfig(
            preferences=data.get("preferences", ""),
            attributes=tuple(data.get("attributes", [])),
            constraints=tuple(data.get("constraints", [])),
            evaluation_criteria=criteria,
            output_format=data.get("output_format"),
        )
    except (json.JSONDecodeError, TypeError, AttributeError):
        return ResearchPlanConfig(
            preferences="Address the goal rigorously with a testable mechanism.",
            attributes=("Novelty", "Feasibility"),
            constraints=(),
            evaluation_criteria=(
                {"name": "novelty", "rubric": "prefer unexplored mechanisms"},
            ),
        )


def resume_from_log(
    config: EngineConfig,
    log_path: str | Path,
    **engine_kwargs: object,
) -> Engine:
    """Rebuild a live engine by replaying a (possibly torn) event log."""
    events = read_event_log(log_path, drop_torn_tail=True)
    if not events:
        raise RestoreFailure(f"event log {log_path} holds no committed batches")
    repair_log(log_path, keep=len(events))
    engine = Engine.replay(config, events, **engine_kwargs)
    return engine


def repair_log(path: str | Path, *, keep: int) -> None:
    """Truncate a log to its first ``keep`` committed events (torn-tail repair)."""
    path = Path(path)
    lines = [line for line in path.read_text().splitlines() if line.strip()]
    if len(lines) > keep:
        path.write_text("\n".join(lines[:keep]) + ("\n" if keep else ""))
