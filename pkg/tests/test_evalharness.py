from __future__ import annotations

import math
import random

import pytest

from hypogen.core import ResearchGoal
from hypogen.errors import EmptyInput, SessionTerminal, TooFewResults
from hypogen.evalharness import (
    LabeledResult,
    accuracy_by_elo_bucket,
    elo_summary_by_tag,
    inject_external_candidates,
    load_results,
    results_from_store,
    temporal_bucket_trend,
    top1_selection,
    write_bucket_report,
    write_trend_report,
)
from hypogen.orchestrator import Engine
from tests.conftest import GOAL_TEXT, small_config


def result(q: str, elo: float, correct: bool, seq: int = 0) -> LabeledResult:
    return LabeledResult(question_id=q, elo=elo, correct=correct, created_seq=seq)


def synthesize_logistic(n: int, seed: int = 0) -> list[LabeledResult]:
    """Latent quality drives both rating and correctness via a logistic link."""
    rng = random.Random(seed)
    results = []
    for i in range(n):
        quality = rng.random()
        elo = 1000.0 + 400.0 * quality + rng.gauss(0, 15)
        p_correct = 1.0 / (1.0 + math.exp(-6.0 * (quality - 0.5)))
        results.append(
            result(f"q{i % 40}", elo, rng.random() < p_correct, seq=i)
        )
    return results


def spearman(xs: list[float], ys: list[float]) -> float:
    def ranks(vals: list[float]) -> list[float]:
        order = sorted(range(len(vals)), key=lambda i: vals[i])
        out = [0.0] * len(vals)
        for rank, i in enumerate(order):
            out[i] = float(rank)
        return out

    rx, ry = ranks(xs), ranks(ys)
    n = len(xs)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = math.sqrt(sum((a - mx) ** 2 for a in rx))
    vy = math.sqrt(sum((b - my) ** 2 for b in ry))
    return cov / (vx * vy)


class TestAccuracyByEloBucket:
    def test_single_bucket_mean(self):
        results = [result("q1", 1210 + i, i < 3) for i in range(4)]
        report = accuracy_by_elo_bucket(results)
        assert len(report.rows) == 1
        assert report.rows[0].n == 4
        assert report.rows[0].accuracy == pytest.approx(0.75)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            accuracy_by_elo_bucket([])

    def test_monotone_synthetic_link(self):
        report = accuracy_by_elo_bucket(synthesize_logistic(5000, seed=3))
        rows = [r for r in report.rows if r.n >= 30]
        rho = spearman([r.midpoint for r in rows], [r.accuracy for r in rows])
        assert rho >= 0.9

    def test_reference_accuracy_per_bucket(self):
        results = [
            result("q1", 1210, True),
            result("q2", 1220, False),
            result("q1", 1320, True),
        ]
        reference = {"q1": 0.8, "q2": 0.4}
        report = accuracy_by_elo_bucket(results, reference)
        low = next(r for r in report.rows if r.label == "1201–1250")
        high = next(r for r in report.rows if r.label == "1301–1350")
        assert low.reference_accuracy == pytest.approx(0.6)
        assert high.reference_accuracy == pytest.approx(0.8)

    def test_every_result_in_exactly_one_bucket(self):
        results = synthesize_logistic(500, seed=9)
        report = accuracy_by_elo_bucket(results)
        assert sum(r.n for r in report.rows) == len(results)


class TestTemporalBucketTrend:
    def test_twenty_results_ten_buckets_of_two(self):
        results = [result("q", 1200 + i, True, seq=i) for i in range(20)]
        rows = temporal_bucket_trend(results)
        assert len(rows) == 10
        assert all(row.n == 2 for row in rows)
        assert rows[0].top10_mean_elo == pytest.approx((1200 + 1201) / 2)

    def test_too_few(self):
        with pytest.raises(TooFewResults):
            temporal_bucket_trend([result("q", 1200, True, seq=i) for i in range(5)])

    def test_remainder_pads_earliest(self):
        results = [result("q", 1200 + i, True, seq=i) for i in range(23)]
        rows = temporal_bucket_trend(results)
        assert [row.n for row in rows] == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]

    def test_every_result_in_exactly_one_temporal_bucket(self):
        results = [result("q", 1200 + i, True, seq=i) for i in range(37)]
        rows = temporal_bucket_trend(results)
        assert sum(row.n for row in rows) == 37


class TestTop1Selection:
    def test_argmax(self):
        results = [
            result("q1", 1210, True, 1),
            result("q1", 1250, False, 2),
            result("q1", 1190, True, 3),
        ]
        assert top1_selection(results)["q1"].elo == 1250

    def test_tie_breaks_to_earlier(self):
        results = [result("q1", 1250, True, 5), result("q1", 1250, False, 2)]
        assert top1_selection(results)["q1"].created_seq == 2

    def test_permutation_invariant(self):
        rng = random.Random(4)
        results = [result("q1", rng.uniform(1000, 1400), True, i) for i in range(30)]
        base = top1_selection(results)["q1"]
        for _ in range(10):
            shuffled = results[:]
            rng.shuffle(shuffled)
            assert top1_selection(shuffled)["q1"] == base

    def test_single_result(self):
        only = result("q1", 1200, True, 1)
        assert top1_selection([only])["q1"] == only


class TestInjectExternalCandidates:
    def test_tagged_candidates_compete(self):
        engine = Engine(small_config(), session_id="inj")
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run(max_steps=2)
        ids = inject_external_candidates(
            engine, ["baseline model answer one", "baseline model answer two"], tag="baseline-x"
        )
        assert len(ids) == 2
        engine.run()
        summary = elo_summary_by_tag(engine.store)
        assert "baseline-x" in summary
        assert summary["baseline-x"]["n"] == 2.0
        assert "mean_elo" in summary["baseline-x"]

    def test_terminal_session_rejected(self):
        engine = Engine(small_config(), session_id="inj2")
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run()
        assert engine.store.is_terminal()
        with pytest.raises(SessionTerminal):
            inject_external_candidates(engine, ["late arrival"], tag="late")


class TestReportFiles:
    def test_round_trip_files(self, tmp_path):
        results = synthesize_logistic(200, seed=1)
        report = accuracy_by_elo_bucket(results)
        paths = write_bucket_report(report, tmp_path / "buckets")
        assert paths["table"].exists() and paths["summary"].exists()
        rows = temporal_bucket_trend(results)
        paths = write_trend_report(rows, tmp_path / "trend")
        header = paths["table"].read_text().splitlines()[0]
        assert header == "bucket\tn\tbest_elo\ttop10_mean_elo"

    def test_load_results(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text(
            '{"question_id": "q1", "elo": 1200, "correct": true, "created_seq": 1}\n'
            '{"question_id": "q2", "elo": 1300, "correct": false, "created_seq": 2}\n'
        )
        results = load_results(path)
        assert len(results) == 2
        assert results[1].elo == 1300


class TestResultsFromStore:
    def test_excludes_drafts_and_unsafe(self):
        engine = Engine(small_config(), session_id="rs")
        engine.start_session(ResearchGoal(goal_text=GOAL_TEXT))
        engine.run()
        results = results_from_store(engine.store, include_unmatched=True)
        states = {
            engine.store.hypotheses[rid].state.value
            for rid in (r.result_text for r in results)
            if rid in engine.store.hypotheses
        }
        ids = {h.id for h in engine.store.hypotheses.values()}
        assert all(r.created_seq >= 1 for r in results)
        assert len(results) <= len(ids)
