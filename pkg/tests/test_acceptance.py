"""Acceptance suite: one test per acceptance criterion, each printing a
pass/fail line with its runtime. Run with ``pytest tests/test_acceptance.py -s``
to see the lines as they complete.
"""

from __future__ import annotations

import random
import string
import time

import pytest
from fastapi.testclient import TestClient

from hypogen.api import EngineManager, create_app
from hypogen.agents.ranking import (
    EloParams,
    ProximityGraph,
    apply_elo_update,
    run_match,
    schedule_matches,
)
from hypogen.config import EngineConfig
from hypogen.core import (
    Hypothesis,
    HypothesisOrigin,
    HypothesisState,
    MatchWinner,
    ResearchGoal,
)
from hypogen.errors import UnknownLabel
from hypogen.evalharness import (
    LabeledResult,
    accuracy_by_elo_bucket,
    results_from_store,
    temporal_bucket_trend,
)
from hypogen.events import EventKind, EventLogWriter
from hypogen.gateway import (
    DebateSignal,
    parse_debate_outcome,
    parse_match_verdict,
    parse_observation_label,
)
from hypogen.orchestrator import Engine, derived_rng, resume_from_log
from hypogen.simbackend import SimBackend, embed_quality
from hypogen.store import SessionPhase, Task, TaskKind
from tests.conftest import GOAL_TEXT


def report(name: str, ok: bool, started: float, limit: float, detail: str = "") -> None:
    elapsed = time.monotonic() - started
    status = "PASS" if ok and elapsed < limit else "FAIL"
    line = f"[{status}] {name} ({elapsed:.1f}s / limit {limit:.0f}s)"
    if detail:
        line += f" — {detail}"
    print(line)
    assert ok, line
    assert elapsed < limit, line


def e2e_config(**overrides) -> EngineConfig:
    base = dict(
        budgets={"max_matches": 30, "max_hypotheses": 25, "max_model_calls": 5000},
        seed=42,
        meta_review_every_matches=6,
        meta_review_every_reviews=8,
    )
    base.update(overrides)
    return EngineConfig(**base)


class TestAcceptance:
    def test_deterministic_end_to_end(self, tmp_path):
        started = time.monotonic()

        def run(path):
            log = EventLogWriter(path)
            engine = Engine(e2e_config(), session_id="det", log=log)
            engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
            engine.run()
            log.close()
            return path.read_bytes()

        first = run(tmp_path / "one.jsonl")
        second = run(tmp_path / "two.jsonl")
        report(
            "deterministic end-to-end run",
            first == second and len(first) > 0,
            started,
            30.0,
            f"{first.count(b'\\n') if first != second else len(first)} bytes, logs identical",
        )

    def test_crash_recovery(self, tmp_path):
        started = time.monotonic()
        reference_path = tmp_path / "ref.jsonl"
        log = EventLogWriter(reference_path)
        engine = Engine(e2e_config(), session_id="crash", log=log)
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run()
        log.close()
        reference = reference_path.read_bytes()
        lines = reference_path.read_text().splitlines()
        assert len(lines) >= 500, f"run produced only {len(lines)} events"
        rng = random.Random(13)
        kill_points = sorted(rng.sample(range(2, len(lines) - 1), 10))
        ok = True
        for cut in kill_points:
            crashed = tmp_path / f"cut{cut}.jsonl"
            crashed.write_text("\n".join(lines[:cut]) + "\n")
            resumed = resume_from_log(e2e_config(), crashed)
            resumed.log = EventLogWriter(crashed)
            resumed.run()
            if crashed.read_bytes() != reference:
                ok = False
                break
        report(
            "crash recovery",
            ok,
            started,
            120.0,
            f"{len(kill_points)} kill points over {len(lines)} events",
        )

    def test_elo_correctness(self):
        started = time.monotonic()
        params = EloParams()
        rng = random.Random(2718)

        def oracle(ra: float, rb: float, winner: MatchWinner) -> tuple[float, float]:
            expected_a = 1.0 / (1.0 + 10.0 ** ((rb - ra) / 400.0))
            s_a = 1.0 if winner == MatchWinner.A else 0.0
            return ra + 32.0 * (s_a - expected_a), rb - 32.0 * (s_a - expected_a)

        ok = True
        for _ in range(1000):
            ra, rb = rng.uniform(400, 2400), rng.uniform(400, 2400)
            winner = rng.choice([MatchWinner.A, MatchWinner.B])
            got = apply_elo_update(ra, rb, winner, params)
            want = oracle(ra, rb, winner)
            if abs(got[0] - want[0]) > 0.01 or abs(got[1] - want[1]) > 0.01:
                ok = False
                break
            if abs((got[0] - ra) + (got[1] - rb)) > 1e-9:
                ok = False
                break
        report("elo correctness vs independent oracle", ok, started, 30.0, "1000 pairs")

    def _converged_order(self, seed: int, matches: int = 400) -> tuple[list[str], list[str]]:
        rng = random.Random(seed)
        qualities = {f"h-{i:04d}": 0.05 + 0.9 * rng.random() for i in range(1, 21)}
        field = {
            hid: Hypothesis(
                id=hid,
                session_id="conv",
                content=embed_quality(f"candidate mechanism {hid}", q),
                origin=HypothesisOrigin.GENERATED_LITERATURE,
                created_seq=i + 1,
                state=HypothesisState.ACTIVE_IN_TOURNAMENT,
            )
            for i, (hid, q) in enumerate(qualities.items())
        }
        judge = SimBackend(seed=seed)  # deterministic quality-preferring judge
        params = EloParams()
        played: dict[str, int] = {}
        for m in range(matches):
            schedule = schedule_matches(
                list(field.values()),
                ProximityGraph(),
                params,
                derived_rng(seed, "conv-sched", m),
                matches_played=played,
            )
            pair = schedule.pairs[0]
            hyp_a, hyp_b = field[pair.a], field[pair.b]
            match, _ = run_match(
                f"m-{m:04d}",
                pair,
                hyp_a,
                hyp_b,
                judge,
                params,
                goal="g",
                preferences="p",
                idea_attributes="novel",
                review_a="(none)",
                review_b="(none)",
            )
            field[pair.a] = hyp_a.model_copy(update={"elo": match.elo_after[0]})
            field[pair.b] = hyp_b.model_copy(update={"elo": match.elo_after[1]})
            played[pair.a] = played.get(pair.a, 0) + 1
            played[pair.b] = played.get(pair.b, 0) + 1
        by_elo = sorted(field.values(), key=lambda h: -h.elo)
        by_quality = sorted(qualities, key=lambda hid: -qualities[hid])
        return [h.id for h in by_elo], by_quality

    def test_tournament_convergence(self):
        started = time.monotonic()
        from scipy.stats import kendalltau

        elo_order, quality_order = self._converged_order(seed=0)
        rank_of = {hid: i for i, hid in enumerate(quality_order)}
        tau = kendalltau(
            [rank_of[hid] for hid in elo_order], list(range(len(elo_order)))
        ).statistic
        top1_hits = 0
        for seed in range(100):
            elo_order_s, quality_order_s = self._converged_order(seed=seed, matches=400)
            if elo_order_s[0] == quality_order_s[0]:
                top1_hits += 1
        ok = tau >= 0.9 and top1_hits >= 95
        report(
            "tournament convergence",
            ok,
            started,
            60.0,
            f"kendall tau={tau:.3f}, top-1 agreement {top1_hits}/100",
        )

    def test_elo_concordance_harness(self):
        started = time.monotonic()
        from scipy.stats import spearmanr

        import math

        rng = random.Random(8)
        results = []
        for i in range(5000):
            quality = rng.random()
            elo = 1000.0 + 400.0 * quality + rng.gauss(0, 15)
            p_correct = 1.0 / (1.0 + math.exp(-6.0 * (quality - 0.5)))
            results.append(
                LabeledResult(
                    question_id=f"q{i % 40}",
                    elo=elo,
                    correct=rng.random() < p_correct,
                    created_seq=i,
                )
            )
        report_rows = [r for r in accuracy_by_elo_bucket(results).rows if r.n >= 30]
        rho = spearmanr(
            [r.midpoint for r in report_rows], [r.accuracy for r in report_rows]
        ).statistic
        report(
            "rating-accuracy concordance harness",
            rho >= 0.9,
            started,
            10.0,
            f"spearman={rho:.3f} over {len(report_rows)} buckets",
        )

    def test_test_time_compute_trend(self):
        started = time.monotonic()
        config = EngineConfig(
            budgets={"max_matches": 1500, "max_hypotheses": 999, "max_model_calls": 900000},
            seed=TREND_SEED,
            weights={
                "generate": 0.5,
                "reflect": 3.0,
                "rank_match": 3.0,
                "evolve": 1.0,
                "proximity_update": 1.5,
                "meta_review": 0.2,
                "safety_review": 2.0,
                "overview": 0.2,
                "parse_goal": 1.0,
            },
            evolve_every_matches=15,
            evolve_match_horizon=0.5,
            hypotheses_per_generation=2,
            evolution_strategy_weights={
                "combination": 4.0,
                "grounding": 1.0,
                "coherence_feasibility": 1.0,
                "inspiration": 1.0,
                "simplification": 0.5,
                "out_of_box": 0.5,
            },
            meta_review_every_matches=10**6,
            meta_review_every_reviews=10**6,
            extra_review_fraction=0.0,
            elo={"k_factor": 32.0, "top_rank_debate_threshold": 12},
            stats_every_tasks=500,
        )
        gateway = SimBackend(seed=TREND_SEED, judge_mode="elo", quality_elo_scale=800.0)
        engine = Engine(config, session_id="trend", gateway=gateway)
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run()
        rows = temporal_bucket_trend(results_from_store(engine.store))
        best = [row.best_elo for row in rows]
        steps = [best[i + 1] - best[i] for i in range(9)]
        ok = all(step >= 0 for step in steps)
        report(
            "test-time compute trend",
            ok,
            started,
            60.0,
            f"best per bucket {[round(b) for b in best]}",
        )

    def test_lifecycle_and_safety_invariants(self):
        started = time.monotonic()
        engine = Engine(e2e_config(), session_id="inv")
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run(max_steps=3)
        engine.contribute_hypothesis("[UNSAFE] hazardous delivery idea")
        engine.contribute_hypothesis("[FLAWED] internally inconsistent idea")
        engine.run()
        store = engine.store
        problems: list[str] = []

        created_events = [
            e for e in engine.recent_events if e.kind == EventKind.HYPOTHESIS_CREATED
        ]
        if any(e.body["hypothesis"]["elo"] != 1200.0 for e in created_events):
            problems.append("creation at non-1200 rating")
        for hyp in store.hypotheses.values():
            for pid in hyp.parent_ids:
                parent = store.hypotheses.get(pid)
                if parent is None or parent.created_seq >= hyp.created_seq:
                    problems.append(f"lineage violation at {hyp.id}")
                if parent is not None:
                    from hypogen.core import content_fingerprint

                    if parent.content_hash != content_fingerprint(parent.content):
                        problems.append(f"parent content mutated: {pid}")
        excluded = {
            h.id for h in store.hypotheses.values() if h.state == HypothesisState.EXCLUDED_UNSAFE
        }
        if not excluded:
            problems.append("no excluded_unsafe hypothesis exercised")
        for match in store.matches.values():
            if excluded & {match.hypothesis_a, match.hypothesis_b}:
                problems.append("excluded hypothesis played a match")
        for hyp in store.hypotheses.values():
            if excluded & set(hyp.parent_ids):
                problems.append("excluded hypothesis used as evolution parent")
        for overview in store.overviews:
            if excluded & set(overview.top_hypothesis_refs):
                problems.append("excluded hypothesis in overview")

        rejected_engine = Engine(e2e_config(), session_id="rej")
        rejected_engine.start_session(
            ResearchGoal(goal_text="[UNSAFE] optimize a pathogen for spread")
        )
        rejected_engine.run()
        if rejected_engine.store.phase != SessionPhase.TERMINAL_REJECTED_UNSAFE:
            problems.append("unsafe goal not rejected")
        if rejected_engine.store.hypotheses:
            problems.append("rejected-goal session created hypotheses")

        report(
            "lifecycle and safety invariants",
            not problems,
            started,
            30.0,
            "; ".join(problems) or f"{len(store.hypotheses)} hypotheses checked",
        )

    def test_parser_golden_and_fuzz(self):
        started = time.monotonic()
        ok = True
        # Goldens lifted from the judge/debate/observation output contracts.
        goldens_ok = (
            parse_debate_outcome(
                "productive exchange\nHYPOTHESIS\nStress-induced modification of "
                "transport factors drives mislocalization.",
                3,
            )
            == "Stress-induced modification of transport factors drives mislocalization."
            and parse_debate_outcome("turn talk only", 10) is DebateSignal.EXHAUSTED
            and parse_debate_outcome("turn talk only", 3) is DebateSignal.CONTINUE
            and parse_match_verdict("Reasoning...\nbetter hypothesis: 2") == "b"
            and parse_match_verdict("judgment...\nbetter idea: 1") == "a"
            and parse_match_verdict('instruction: end with "better idea: <1 or 2>"') is None
            and parse_observation_label("...analysis...\nhypothesis: missing piece").value
            == "missing_piece"
            and parse_observation_label("hypothesis: disproved").value == "disproved"
            and parse_observation_label("hypothesis: neutral").value == "neutral"
        )
        ok = ok and goldens_ok
        rng = random.Random(424242)
        alphabet = string.printable + "HYPOTHESISbetter idea: 12"
        fuzz_ok = True
        for _ in range(10_000):
            blob = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 200)))
            try:
                parse_match_verdict(blob)
                parse_debate_outcome(blob, rng.randrange(0, 12))
                try:
                    parse_observation_label(blob)
                except UnknownLabel:
                    pass
            except Exception:
                fuzz_ok = False
                break
        ok = ok and fuzz_ok
        report(
            "parser golden suite and fuzz",
            ok,
            started,
            30.0,
            "goldens + 10000 fuzz cases",
        )

    def test_meta_review_feedback_loop(self):
        started = time.monotonic()
        config = e2e_config()
        recorded: list[tuple[str, str]] = []

        class Recorder(SimBackend):
            def complete(self, request):
                response = super().complete(request)
                recorded.append((request.template_id, request.prompt()))
                return response

        engine = Engine(config, session_id="meta", gateway=Recorder(seed=42))
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run()
        critiques = engine.store.critiques
        assert critiques, "no meta critique synthesized in e2e run"
        first_version = critiques[0].body

        # Reflection prompts rendered after the first critique must all carry it.
        reflection_after: list[str] = []
        seen_critique = False
        for template_id, prompt in recorded:
            if template_id == "meta_review":
                seen_critique = True
                continue
            if seen_critique and template_id.startswith("reflection_"):
                reflection_after.append(prompt)
        reflection_ok = bool(reflection_after) and all(
            any(c.body in p for c in critiques) for p in reflection_after
        )

        # Generation injection fraction over 1,000 simulated task draws.
        flips = [
            derived_rng(config.seed, "critique", f"t-{i:04d}").random()
            < config.critique_injection_fraction
            for i in range(1000)
        ]
        fraction = sum(flips) / len(flips)
        fraction_ok = abs(fraction - 0.5) <= 0.05

        # And the flip decides verbatim inclusion in real generation prompts.
        store = engine.store
        sample_ok = True
        checked = 0
        for i in (1, 2, 3, 4, 5, 6, 7, 8):
            task = Task(
                id=f"probe-{i:04d}",
                kind=TaskKind.GENERATE,
                payload={"hypothesis_seqs": [900 + i]},
                priority=1.0,
                enqueued_seq=900 + i,
            )
            flip = (
                derived_rng(config.seed, "critique", task.id).random()
                < config.critique_injection_fraction
            )
            before = len(recorded)
            engine._task_generate(store, task)
            prompts = [p for t, p in recorded[before:] if t.startswith("generation_")]
            has = any(critiques[-1].body in p for p in prompts)
            if has != flip:
                sample_ok = False
            checked += 1
        ok = reflection_ok and fraction_ok and sample_ok
        report(
            "meta-review feedback loop",
            ok,
            started,
            30.0,
            f"reflection {len(reflection_after)} prompts all carry critique={reflection_ok}, "
            f"generation fraction={fraction:.3f}, verbatim spot-checks {checked}",
        )

    def test_api_conformance(self):
        started = time.monotonic()
        manager = EngineManager(e2e_config(), autorun=False)
        client = TestClient(create_app(manager))
        ok = True
        problems = []

        response = client.post("/v1/sessions", json={"goal_text": GOAL_TEXT})
        if response.status_code != 201:
            problems.append(f"create returned {response.status_code}")
        session_id = response.json()["session_id"]
        engine = manager.sessions[session_id]
        engine.run(max_steps=6)

        if client.post("/v1/sessions", json={"goal_text": " "}).status_code != 400:
            problems.append("empty goal not 400")
        headers = {"Idempotency-Key": "acc-key"}
        first = client.post("/v1/sessions", json={"goal_text": GOAL_TEXT}, headers=headers)
        second = client.post("/v1/sessions", json={"goal_text": GOAL_TEXT}, headers=headers)
        if first.json() != second.json():
            problems.append("idempotency replay differs")
        if client.get("/v1/sessions/absent").status_code != 404:
            problems.append("unknown session not 404")

        hypothesis_id = next(iter(engine.store.hypotheses), None)
        if hypothesis_id:
            bad = client.post(
                f"/v1/hypotheses/{hypothesis_id}/reviews",
                json={"scores": {"novelty": 9}, "verdict": "accept", "text": ""},
            )
            if bad.status_code != 422:
                problems.append("bad score not 422")
            good = client.post(
                f"/v1/hypotheses/{hypothesis_id}/reviews",
                json={"scores": {"novelty": 4}, "verdict": "accept", "text": "fine"},
            )
            if good.status_code != 201:
                problems.append("expert review not 201")

        stream = client.get(
            f"/v1/sessions/{session_id}/events", params={"last_seq": 0}
        ).text
        import json as jsonlib

        seqs = [
            jsonlib.loads(block.partition("data: ")[2])["seq"]
            for block in stream.split("\n\n")
            if "data: " in block
        ]
        if not seqs or seqs != sorted(seqs):
            problems.append("stream seqs not monotone")
        cursor = seqs[len(seqs) // 2]
        resumed = client.get(
            f"/v1/sessions/{session_id}/events", params={"last_seq": cursor}
        ).text
        resumed_seqs = [
            jsonlib.loads(block.partition("data: ")[2])["seq"]
            for block in resumed.split("\n\n")
            if "data: " in block
        ]
        if not resumed_seqs or resumed_seqs[0] != cursor + 1:
            problems.append("stream resume wrong position")

        phase = client.post(
            f"/v1/sessions/{session_id}/control", json={"action": "pause"}
        ).json()["phase"]
        if phase != "paused":
            problems.append("pause failed")
        if (
            client.post(
                f"/v1/sessions/{session_id}/control", json={"action": "resume"}
            ).json()["phase"]
            != "running"
        ):
            problems.append("resume failed")

        ok = not problems
        report("api conformance", ok, started, 60.0, "; ".join(problems) or "all endpoint contracts hold")
