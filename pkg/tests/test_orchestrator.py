from __future__ import annotations

import hashlib
import json
import random

import pytest

from hypogen.config import EngineConfig
from hypogen.core import (
    HypothesisOrigin,
    HypothesisState,
    ResearchGoal,
    ReviewKind,
)
from hypogen.errors import RestoreFailure, SessionTerminal
from hypogen.events import (
    EventKind,
    EventLogWriter,
    InMemoryEventLog,
    read_event_log,
)
from hypogen.orchestrator import (
    Engine,
    LogicalClock,
    derived_rng,
    next_task,
    normalize_weights,
    resume_from_log,
)
from hypogen.store import SessionPhase, SessionStore, Task, TaskKind, compute_stats
from tests.conftest import GOAL_TEXT, small_config


def started_engine(config: EngineConfig | None = None, **engine_kwargs) -> Engine:
    engine = Engine(config or small_config(), session_id="t", **engine_kwargs)
    engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
    return engine


class TestStartSession:
    def test_two_pending_tasks_in_order(self):
        engine = started_engine()
        pending = sorted(engine.store.pending_tasks.values(), key=lambda t: t.enqueued_seq)
        assert [t.kind for t in pending] == [TaskKind.SAFETY_REVIEW, TaskKind.PARSE_GOAL]
        assert engine.store.phase == SessionPhase.PARSING
        assert engine.store.goal is not None

    def test_goal_safety_runs_before_parse(self):
        engine = started_engine()
        engine.step()
        started = [
            e for e in engine.recent_events if e.kind == EventKind.TASK_STARTED
        ]
        assert started[0].body["kind"] == TaskKind.SAFETY_REVIEW.value

    def test_flagged_goal_terminates_with_zero_hypotheses(self):
        engine = Engine(small_config(), session_id="t")
        engine.start_session(
            ResearchGoal(goal_text="[UNSAFE] maximize transmissibility of a pathogen")
        )
        engine.run()
        assert engine.store.phase == SessionPhase.TERMINAL_REJECTED_UNSAFE
        created = [
            e for e in engine.recent_events if e.kind == EventKind.HYPOTHESIS_CREATED
        ]
        assert created == []
        assert engine.store.hypotheses == {}

    def test_empty_goal_rejected(self):
        with pytest.raises(ValueError):
            ResearchGoal(goal_text="   ")

    def test_double_start_rejected(self):
        engine = started_engine()
        with pytest.raises(Exception):
            engine.start_session(ResearchGoal(goal_text="again"))


class TestNextTask:
    def make_store(self, kinds: list[TaskKind]) -> SessionStore:
        from hypogen.store import Budgets

        store = SessionStore("s", Budgets(max_matches=10, max_hypotheses=10, max_model_calls=10), 0)
        store.phase = SessionPhase.RUNNING
        for i, kind in enumerate(kinds, start=1):
            task = Task(
                id=f"t-{i:04d}", kind=kind, priority=50.0, enqueued_seq=i
            )
            store.pending_tasks[task.id] = task
        return store

    def test_zero_support_kinds_excluded(self):
        store = self.make_store([TaskKind.REFLECT])
        weights = normalize_weights({"generate": 1.0, "reflect": 1.0})
        task = next_task(weights, store, random.Random(0))
        assert task is not None and task.kind == TaskKind.REFLECT

    def test_empty_queue_idle(self):
        store = self.make_store([])
        assert next_task(normalize_weights({"generate": 1}), store, random.Random(0)) is None

    def test_priority_then_enqueue_order(self):
        store = self.make_store([TaskKind.REFLECT, TaskKind.REFLECT])
        first = sorted(store.pending_tasks.values(), key=lambda t: t.enqueued_seq)[0]
        weights = normalize_weights({"reflect": 1.0})
        assert next_task(weights, store, random.Random(0)).id == first.id

    def test_deterministic_sequence_matches_independent_replay(self):
        # Reimplementation of the documented sampler: sha256-derived uniform,
        # kinds in lexicographic order, cumulative-weight selection.
        weights = {"generate": 2.0, "reflect": 1.0}
        seed = 42

        def replay(index: int) -> str:
            digest = hashlib.sha256(f"{seed}:sched-kind:{index}".encode()).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            point = rng.random() * 3.0
            return "generate" if point <= 2.0 else "reflect"

        store = self.make_store([TaskKind.GENERATE, TaskKind.REFLECT])
        picks = []
        for i in range(50):
            rng = derived_rng(seed, "sched-kind", i)
            task = next_task(normalize_weights(weights), store, rng)
            picks.append(task.kind.value)
        assert picks == [replay(i) for i in range(50)]

    def test_fairness_two_to_one(self):
        store = self.make_store([TaskKind.GENERATE, TaskKind.REFLECT])
        weights = normalize_weights({"generate": 2.0, "reflect": 1.0})
        hits = 0
        draws = 10_000
        for i in range(draws):
            task = next_task(weights, store, derived_rng(7, "sched-kind", i))
            if task.kind == TaskKind.GENERATE:
                hits += 1
        assert abs(hits / draws - 2 / 3) <= 0.03

    def test_parsing_phase_only_admits_gatekeepers(self):
        store = self.make_store([TaskKind.GENERATE, TaskKind.PARSE_GOAL])
        store.phase = SessionPhase.PARSING
        task = next_task(normalize_weights({"generate": 5.0, "parse_goal": 0.1}), store, random.Random(0))
        assert task.kind == TaskKind.PARSE_GOAL


class TestWorkerStep:
    def test_generate_task_emits_hypotheses(self):
        engine = started_engine()
        engine.run(max_steps=2)  # safety + parse
        assert engine.store.phase == SessionPhase.RUNNING
        engine.run(max_steps=1)  # one generate task
        kinds = [e.kind for e in engine.recent_events]
        assert EventKind.HYPOTHESIS_CREATED in kinds
        started = [e for e in engine.recent_events if e.kind == EventKind.TASK_STARTED]
        completed = [e for e in engine.recent_events if e.kind == EventKind.TASK_COMPLETED]
        assert len(started) == len(completed) == 3

    def test_initial_reject_path(self):
        engine = started_engine()
        engine.run(max_steps=2)
        hyp = engine.contribute_hypothesis("[FLAWED] claim contradicting basics")
        engine.run()
        final = engine.store.hypotheses[hyp.id]
        assert final.state == HypothesisState.REJECTED_INITIAL
        reviews = engine.store.reviews_of(hyp.id)
        assert reviews and reviews[0].verdict.value == "reject"

    def test_missing_hypothesis_dead_letters_after_retries(self):
        config = small_config(max_attempts=3)
        engine = started_engine(config)
        engine.run(max_steps=2)
        engine._apply_batch(
            [
                engine._enqueue_proposal(
                    TaskKind.REFLECT,
                    {"hypothesis_id": "h-9999", "review_kind": "initial"},
                )
            ]
        )
        engine.run()
        assert any(t.payload.get("hypothesis_id") == "h-9999" for t in engine.store.dead_letter)
        failures = [e for e in engine.recent_events if e.kind == EventKind.TASK_FAILED]
        assert len([f for f in failures if "vanished" in f.body["cause"]]) == 3


class TestComputeStats:
    def test_counts_and_rates(self):
        engine = started_engine()
        engine.run()
        stats = compute_stats(engine.store)
        assert stats.hypotheses_total == len(engine.store.hypotheses)
        unreviewed = sum(1 for h in engine.store.hypotheses.values() if not h.reviews)
        assert stats.hypotheses_unreviewed == unreviewed
        assert stats.matches_played == len(engine.store.matches)
        for rate in stats.per_origin_win_rate.values():
            assert 0.0 <= rate <= 1.0

    def test_win_rate_ratio(self):
        from hypogen.store import Budgets
        from hypogen.core import MatchMode, MatchWinner, TournamentMatch, Hypothesis

        store = SessionStore("s", Budgets(max_matches=10, max_hypotheses=10, max_model_calls=10), 0)
        store.phase = SessionPhase.RUNNING
        for i, origin in ((1, HypothesisOrigin.EVOLVED), (2, HypothesisOrigin.GENERATED_LITERATURE)):
            parents = ("h-0000",) if origin == HypothesisOrigin.EVOLVED else ()
            store.hypotheses[f"h-{i:04d}"] = Hypothesis(
                id=f"h-{i:04d}", session_id="s", content=f"c{i}", origin=origin,
                parent_ids=parents, created_seq=i,
                state=HypothesisState.ACTIVE_IN_TOURNAMENT,
            )
        outcomes = [MatchWinner.A, MatchWinner.A, MatchWinner.A, MatchWinner.B]
        for i, winner in enumerate(outcomes, start=1):
            store.matches[f"m-{i:04d}"] = TournamentMatch(
                id=f"m-{i:04d}", hypothesis_a="h-0001", hypothesis_b="h-0002",
                mode=MatchMode.SINGLE_TURN, winner=winner,
                elo_before=(1200, 1200), elo_after=(1216, 1184),
            )
        stats = compute_stats(store)
        assert stats.per_origin_win_rate["evolved"] == pytest.approx(0.75)

    def test_top_k_mean_with_fewer_than_k(self):
        from hypogen.store import Budgets
        from hypogen.core import Hypothesis

        store = SessionStore("s", Budgets(max_matches=1, max_hypotheses=9, max_model_calls=9), 0)
        for i, elo in enumerate((1200.0, 1210.0, 1220.0, 1230.0), start=1):
            store.hypotheses[f"h-{i:04d}"] = Hypothesis(
                id=f"h-{i:04d}", session_id="s", content=f"c{i}",
                origin=HypothesisOrigin.GENERATED_LITERATURE, created_seq=i,
                elo=elo, state=HypothesisState.ACTIVE_IN_TOURNAMENT,
            )
        stats = compute_stats(store)
        assert stats.top_k_mean_elo == pytest.approx(1215.0)
        assert stats.best_elo == pytest.approx(1230.0)


class TestTerminalPolicy:
    def test_budget_exhaustion(self):
        engine = started_engine(small_config(budgets={"max_matches": 3, "max_hypotheses": 30, "max_model_calls": 4000}))
        engine.run()
        assert engine.store.phase == SessionPhase.TERMINAL_BUDGET_EXHAUSTED
        assert engine.store.consumed.max_matches == 3

    def test_stop_request_yields_complete(self):
        engine = started_engine()
        engine.run(max_steps=4)
        phase = engine.control("stop")
        assert phase == SessionPhase.TERMINAL_COMPLETE
        assert engine.step() is False

    def test_running_when_under_budget_and_no_stop(self):
        engine = started_engine()
        engine.run(max_steps=5)
        assert engine.is_terminal_decision() == SessionPhase.RUNNING

    def test_pause_blocks_dequeue_resume_restores(self):
        engine = started_engine()
        engine.run(max_steps=3)
        engine.control("pause")
        assert engine.step() is False
        engine.control("resume")
        assert engine.step() is True

    def test_terminal_control_raises(self):
        engine = started_engine()
        engine.run()
        with pytest.raises(SessionTerminal):
            engine.control("resume")


class TestBudgetAndSeqInvariants:
    def test_seq_strictly_increasing_no_gaps(self):
        engine = started_engine()
        engine.run()
        seqs = [e.seq for e in engine.recent_events]
        assert seqs == list(range(1, len(seqs) + 1))

    def test_budget_monotonic_and_phase_sticky(self):
        engine = started_engine()
        engine.run()
        replayed = Engine(small_config(), session_id="t")
        last = (0, 0, 0)
        terminal_seen = False
        for event in engine.recent_events:
            replayed.store.apply(event)
            consumed = replayed.store.consumed
            now = (consumed.max_matches, consumed.max_hypotheses, consumed.max_model_calls)
            assert all(a >= b for a, b in zip(now, last))
            last = now
            if terminal_seen:
                assert replayed.store.is_terminal()
            terminal_seen = terminal_seen or replayed.store.is_terminal()


class TestWiring:
    def test_created_hypothesis_gets_initial_review_task(self):
        engine = started_engine()
        engine.run(max_steps=2)
        hyp = engine.contribute_hypothesis("expert idea with mechanism and assay")
        kinds = [
            (t.kind, t.payload.get("review_kind"))
            for t in engine.store.pending_tasks.values()
            if t.payload.get("hypothesis_id") == hyp.id
        ]
        assert (TaskKind.REFLECT, "initial") in kinds

    def test_initial_accept_enqueues_safety_and_full(self):
        engine = started_engine()
        engine.run(max_steps=2)
        hyp = engine.contribute_hypothesis("expert idea with mechanism and assay")
        for _ in range(60):
            engine.step()
            state = engine.store.hypotheses[hyp.id].state
            if state == HypothesisState.UNDER_FULL_REVIEW:
                break
        related = [
            t for t in engine.store.pending_tasks.values()
            if t.payload.get("hypothesis_id") == hyp.id
        ]
        kinds = {(t.kind, t.payload.get("review_kind")) for t in related}
        assert (TaskKind.SAFETY_REVIEW, None) in kinds
        assert (TaskKind.REFLECT, "full") in kinds

    def test_admission_requires_initial_full_and_safety(self):
        engine = started_engine()
        engine.run()
        for hyp in engine.store.hypotheses.values():
            if hyp.state in (HypothesisState.ACTIVE_IN_TOURNAMENT, HypothesisState.RETIRED):
                reviews = engine.store.reviews_of(hyp.id)
                assert any(
                    r.kind == ReviewKind.INITIAL and r.verdict.value == "accept" for r in reviews
                )
                assert any(r.kind == ReviewKind.FULL for r in reviews)
                assert any(
                    d.subject.value == "hypothesis"
                    and d.subject_id == hyp.id
                    and d.verdict.value == "approved"
                    for d in engine.store.safety_decisions
                )

    def test_excluded_unsafe_never_scheduled_or_evolved(self):
        engine = started_engine()
        engine.run(max_steps=2)
        bad = engine.contribute_hypothesis("[UNSAFE] harmful delivery route idea")
        engine.run()
        assert engine.store.hypotheses[bad.id].state == HypothesisState.EXCLUDED_UNSAFE
        for match in engine.store.matches.values():
            assert bad.id not in (match.hypothesis_a, match.hypothesis_b)
        for hyp in engine.store.hypotheses.values():
            assert bad.id not in hyp.parent_ids
        for overview in engine.store.overviews:
            assert bad.id not in overview.top_hypothesis_refs


class TestCheckpointRestore:
    def test_identity_round_trip(self):
        engine = started_engine()
        engine.run(max_steps=8)
        blob = engine.snapshot()
        restored = SessionStore.from_checkpoint(blob)
        from hypogen.events import canonical_json

        assert canonical_json(restored.to_dict()) == canonical_json(engine.store.to_dict())

    def test_corrupt_blob_rejected(self):
        engine = started_engine()
        engine.run(max_steps=4)
        blob = engine.snapshot()
        blob["store"]["consumed"]["max_matches"] = 99
        with pytest.raises(RestoreFailure):
            SessionStore.from_checkpoint(blob)

    def test_tail_gap_rejected(self, tmp_path):
        log_path = tmp_path / "events.jsonl"
        log = EventLogWriter(log_path)
        engine = started_engine(log=log)
        engine.run(max_steps=6)
        blob = engine.snapshot()
        engine.run(max_steps=4)
        log.close()
        tail = read_event_log(log_path, from_seq=blob["high_water_seq"] + 2)
        with pytest.raises(RestoreFailure):
            Engine.restore(small_config(), blob, tail)

    def test_checkpoint_plus_tail_equals_live(self, tmp_path):
        from hypogen.events import canonical_json

        log_path = tmp_path / "events.jsonl"
        log = EventLogWriter(log_path)
        engine = started_engine(log=log)
        engine.run(max_steps=7)
        blob = engine.snapshot()
        engine.run()
        log.close()
        tail = read_event_log(log_path, from_seq=blob["high_water_seq"] + 1)
        restored = Engine.restore(small_config(), blob, tail)
        assert canonical_json(restored.store.to_dict()) == canonical_json(engine.store.to_dict())


class TestDeterminismAndRecovery:
    def run_to_log(self, path) -> bytes:
        log = EventLogWriter(path)
        engine = Engine(small_config(), session_id="det", log=log)
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run()
        log.close()
        return path.read_bytes()

    def test_two_runs_byte_identical(self, tmp_path):
        a = self.run_to_log(tmp_path / "a.jsonl")
        b = self.run_to_log(tmp_path / "b.jsonl")
        assert a == b

    def test_kill_restore_continue_equals_uninterrupted(self, tmp_path):
        reference = self.run_to_log(tmp_path / "ref.jsonl")
        lines = (tmp_path / "ref.jsonl").read_text().splitlines()
        rng = random.Random(5)
        for cut in sorted(rng.sample(range(2, len(lines) - 1), 5)):
            crashed = tmp_path / f"cut-{cut}.jsonl"
            crashed.write_text("\n".join(lines[:cut]) + "\n")
            engine = resume_from_log(small_config(), crashed)
            engine.log = EventLogWriter(crashed)
            engine.run()
            assert crashed.read_bytes() == reference, f"divergence after kill at {cut}"


class TestMultiWorker:
    def test_parallel_run_reaches_terminal_with_invariants(self):
        config = small_config(worker_count=4)
        engine = Engine(config, session_id="mw")
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run_parallel()
        assert engine.store.is_terminal()
        seqs = [e.seq for e in engine.recent_events]
        assert seqs == list(range(1, len(seqs) + 1))
        for hyp in engine.store.hypotheses.values():
            for pid in hyp.parent_ids:
                assert engine.store.hypotheses[pid].created_seq < hyp.created_seq


class TestLogicalClock:
    def test_timestamps_derive_from_seq(self):
        clock = LogicalClock()
        assert clock.event_time(1) == "2030-01-01T00:00:01Z"
        assert clock.event_time(61) == "2030-01-01T00:01:01Z"
        assert clock.event_time(3661) == "2030-01-01T01:01:01Z"
