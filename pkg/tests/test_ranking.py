from __future__ import annotations

import random

import pytest

from hypogen.agents.ranking import (
    EloParams,
    MatchSchedule,
    ProximityGraph,
    ScheduledPair,
    apply_elo_update,
    compute_similarity,
    dedup_clusters,
    duplicate_ids,
    expected_score,
    jaccard_similarity,
    run_match,
    schedule_matches,
)
from hypogen.core import (
    Hypothesis,
    HypothesisOrigin,
    HypothesisState,
    MatchMode,
    MatchWinner,
)
from hypogen.errors import InsufficientPopulation, NonFiniteRating, VerdictUnparseable
from hypogen.gateway import AgentKind, MockScript, MockScriptEntry, ModelRequest, ScriptedBackend

PARAMS = EloParams()


def active_hypothesis(i: int, elo: float = 1200.0, content: str = "") -> Hypothesis:
    return Hypothesis(
        id=f"h-{i:04d}",
        session_id="s",
        content=content or f"hypothesis body {i}",
        origin=HypothesisOrigin.GENERATED_LITERATURE,
        created_seq=i,
        elo=elo,
        state=HypothesisState.ACTIVE_IN_TOURNAMENT,
    )


def oracle_expected(ra: float, rb: float) -> float:
    # Independent restatement of the logistic expectation, kept separate
    # from the implementation under test.
    return 1.0 / (1.0 + 10.0 ** ((rb - ra) / 400.0))


class TestExpectedScore:
    def test_symmetric_ratings(self):
        assert expected_score(1200, 1200, PARAMS) == pytest.approx(0.5)

    def test_derived_values(self):
        assert expected_score(1400, 1200, PARAMS) == pytest.approx(0.7597, abs=1e-4)
        assert expected_score(1200, 1400, PARAMS) == pytest.approx(0.2403, abs=1e-4)

    def test_complement(self):
        rng = random.Random(3)
        for _ in range(200):
            ra, rb = rng.uniform(800, 1800), rng.uniform(800, 1800)
            assert expected_score(ra, rb, PARAMS) + expected_score(rb, ra, PARAMS) == pytest.approx(1.0)

    def test_non_finite(self):
        with pytest.raises(NonFiniteRating):
            expected_score(float("nan"), 1200, PARAMS)


class TestApplyEloUpdate:
    def test_even_match(self):
        assert apply_elo_update(1200, 1200, MatchWinner.A, PARAMS) == pytest.approx((1216, 1184))

    def test_derived_favourite_wins(self):
        ra, rb = apply_elo_update(1400, 1200, MatchWinner.A, PARAMS)
        assert (ra, rb) == pytest.approx((1407.69, 1192.31), abs=0.01)

    def test_derived_upset(self):
        ra, rb = apply_elo_update(1400, 1200, MatchWinner.B, PARAMS)
        assert (ra, rb) == pytest.approx((1375.69, 1224.31), abs=0.01)

    def test_oracle_1000_random_pairs(self):
        rng = random.Random(99)
        for _ in range(1000):
            ra, rb = rng.uniform(600, 2000), rng.uniform(600, 2000)
            winner = rng.choice([MatchWinner.A, MatchWinner.B])
            got_a, got_b = apply_elo_update(ra, rb, winner, PARAMS)
            s_a = 1.0 if winner == MatchWinner.A else 0.0
            want_a = ra + 32.0 * (s_a - oracle_expected(ra, rb))
            want_b = rb + 32.0 * ((1.0 - s_a) - oracle_expected(rb, ra))
            assert got_a == pytest.approx(want_a, abs=0.01)
            assert got_b == pytest.approx(want_b, abs=0.01)
            assert (got_a - ra) + (got_b - rb) == pytest.approx(0.0, abs=1e-9)

    def test_winner_never_loses_rating(self):
        rng = random.Random(5)
        for _ in range(200):
            ra, rb = rng.uniform(600, 2000), rng.uniform(600, 2000)
            got_a, got_b = apply_elo_update(ra, rb, MatchWinner.A, PARAMS)
            assert got_a >= ra
            assert got_b <= rb


class TestScheduleMatches:
    def test_two_hypotheses_forced_pair(self):
        pool = [active_hypothesis(1), active_hypothesis(2)]
        schedule = schedule_matches(pool, ProximityGraph(), PARAMS, random.Random(0))
        assert len(schedule.pairs) == 1
        assert {schedule.pairs[0].a, schedule.pairs[0].b} == {"h-0001", "h-0002"}

    def test_insufficient_population(self):
        with pytest.raises(InsufficientPopulation):
            schedule_matches([active_hypothesis(1)], ProximityGraph(), PARAMS, random.Random(0))

    def test_similarity_weighting_monte_carlo(self):
        # One pair has similarity 0.9, the rest 0.0, flat recency and rank:
        # sampling weight ratio is 1.9 vs 1.0.
        pool = [active_hypothesis(i) for i in range(1, 5)]
        graph = ProximityGraph().with_edge("h-0001", "h-0002", 0.9)
        params = EloParams(top_rank_debate_threshold=0)  # no rank boost for anyone
        counts: dict[frozenset, int] = {}
        rng = random.Random(1234)
        for _ in range(10_000):
            schedule = schedule_matches(pool, graph, params, rng)
            pair = schedule.pairs[0]
            counts[frozenset((pair.a, pair.b))] = counts.get(frozenset((pair.a, pair.b)), 0) + 1
        hot = counts[frozenset(("h-0001", "h-0002"))]
        others = [n for key, n in counts.items() if key != frozenset(("h-0001", "h-0002"))]
        baseline = sum(others) / len(others)
        assert hot / baseline == pytest.approx(1.9, abs=0.1)

    def test_top_rank_pairs_get_debate_mode(self):
        pool = [active_hypothesis(i, elo=1300 - i * 10) for i in range(1, 7)]
        params = EloParams(top_rank_debate_threshold=2)
        rng = random.Random(0)
        modes = set()
        for _ in range(200):
            schedule = schedule_matches(pool, ProximityGraph(), params, rng)
            pair = schedule.pairs[0]
            top_two = {"h-0001", "h-0002"}
            expected = (
                MatchMode.MULTI_TURN_DEBATE
                if {pair.a, pair.b} <= top_two
                else MatchMode.SINGLE_TURN
            )
            assert pair.mode == expected
            modes.add(pair.mode)
        assert modes == {MatchMode.MULTI_TURN_DEBATE, MatchMode.SINGLE_TURN}

    def test_batch_has_no_repeated_hypotheses(self):
        pool = [active_hypothesis(i) for i in range(1, 9)]
        schedule = schedule_matches(
            pool, ProximityGraph(), PARAMS, random.Random(7), batch_size=4
        )
        seen: list[str] = []
        for pair in schedule.pairs:
            assert pair.a != pair.b
            seen.extend((pair.a, pair.b))
        assert len(seen) == len(set(seen))

    def test_deterministic_given_seed(self):
        pool = [active_hypothesis(i) for i in range(1, 6)]
        a = schedule_matches(pool, ProximityGraph(), PARAMS, random.Random(11), batch_size=2)
        b = schedule_matches(pool, ProximityGraph(), PARAMS, random.Random(11), batch_size=2)
        assert a == b


def judge_script(response: str) -> ScriptedBackend:
    return ScriptedBackend(MockScript(default_response=response))


def match_kwargs() -> dict:
    return dict(
        goal="G",
        preferences="P",
        idea_attributes="novel",
        review_a="review a",
        review_b="review b",
    )


class TestRunMatch:
    def test_single_turn_winner_b(self):
        hyp_a, hyp_b = active_hypothesis(1), active_hypothesis(2)
        pair = ScheduledPair(a=hyp_a.id, b=hyp_b.id, mode=MatchMode.SINGLE_TURN)
        match, calls = run_match(
            "m-0001", pair, hyp_a, hyp_b, judge_script("analysis...\nbetter hypothesis: 2"),
            PARAMS, **match_kwargs(),
        )
        assert match.winner == MatchWinner.B
        assert calls == 1
        assert match.elo_after == pytest.approx((1184.0, 1216.0))
        assert match.elo_before == (1200.0, 1200.0)

    def test_debate_mode_winner_a(self):
        hyp_a, hyp_b = active_hypothesis(1), active_hypothesis(2)
        pair = ScheduledPair(a=hyp_a.id, b=hyp_b.id, mode=MatchMode.MULTI_TURN_DEBATE)
        match, calls = run_match(
            "m-0001", pair, hyp_a, hyp_b, judge_script("panel verdict: better idea: 1"),
            PARAMS, **match_kwargs(),
        )
        assert match.winner == MatchWinner.A
        assert match.mode == MatchMode.MULTI_TURN_DEBATE

    def test_unparseable_twice_raises_without_rating_change(self):
        hyp_a, hyp_b = active_hypothesis(1), active_hypothesis(2)
        pair = ScheduledPair(a=hyp_a.id, b=hyp_b.id, mode=MatchMode.SINGLE_TURN)
        with pytest.raises(VerdictUnparseable):
            run_match(
                "m-0001", pair, hyp_a, hyp_b, judge_script("no verdict at all"),
                PARAMS, **match_kwargs(),
            )
        assert hyp_a.elo == 1200.0 and hyp_b.elo == 1200.0

    def test_zero_sum_and_winner_monotonicity(self):
        rng = random.Random(21)
        for _ in range(50):
            ra, rb = rng.uniform(900, 1600), rng.uniform(900, 1600)
            hyp_a, hyp_b = active_hypothesis(1, ra), active_hypothesis(2, rb)
            pair = ScheduledPair(a=hyp_a.id, b=hyp_b.id, mode=MatchMode.SINGLE_TURN)
            match, _ = run_match(
                "m-0001", pair, hyp_a, hyp_b, judge_script("better hypothesis: 1"),
                PARAMS, **match_kwargs(),
            )
            assert sum(match.elo_after) == pytest.approx(ra + rb, abs=1e-9)
            assert match.elo_after[0] >= ra
            assert match.elo_after[1] <= rb


class TestSimilarity:
    def test_identical_content_short_circuits(self):
        hyp_a = active_hypothesis(1, content="same words")
        hyp_b = active_hypothesis(2, content="same words")
        backend = judge_script("should not matter")
        value, calls = compute_similarity(hyp_a, hyp_b, backend)
        assert value == 1.0
        assert calls == 0

    def test_scripted_value(self):
        hyp_a = active_hypothesis(1, content="alpha")
        hyp_b = active_hypothesis(2, content="beta")
        value, calls = compute_similarity(
            hyp_a, hyp_b, judge_script("closely related pair\nsimilarity: 0.90")
        )
        assert value == pytest.approx(0.9)
        assert calls == 1

    def test_disjoint_scripted_value(self):
        hyp_a = active_hypothesis(1, content="alpha")
        hyp_b = active_hypothesis(2, content="beta")
        value, _ = compute_similarity(hyp_a, hyp_b, judge_script("similarity: 0.05"))
        assert value == pytest.approx(0.05)

    def test_jaccard_bounds(self):
        hyp_a = active_hypothesis(1, content="shared words here")
        hyp_b = active_hypothesis(2, content="shared words there")
        value = jaccard_similarity(hyp_a, hyp_b)
        assert 0.0 < value < 1.0
        assert jaccard_similarity(hyp_a, hyp_a) == 1.0


class TestProximityGraph:
    def test_symmetry(self):
        graph = ProximityGraph().with_edge("b", "a", 0.4)
        assert graph.similarity("a", "b") == pytest.approx(0.4)
        assert graph.similarity("b", "a") == pytest.approx(0.4)

    def test_no_self_edges(self):
        graph = ProximityGraph().with_edge("a", "a", 0.9)
        assert graph.edges == {}
        assert graph.similarity("a", "a") == 1.0

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            ProximityGraph().with_edge("a", "b", 1.2)


class TestDedupClusters:
    def test_spec_example(self):
        graph = ProximityGraph(
            edges={
                "h1|h2": 0.97,
                "h2|h3": 0.96,
                "h3|h4": 0.10,
            }
        )
        clusters = dedup_clusters(graph, 0.95)
        assert {frozenset(c) for c in clusters} == {
            frozenset({"h1", "h2", "h3"}),
            frozenset({"h4"}),
        }

    def test_empty_graph(self):
        assert dedup_clusters(ProximityGraph(), 0.95) == []

    def test_all_below_threshold(self):
        graph = ProximityGraph(edges={"a|b": 0.5, "b|c": 0.4})
        clusters = dedup_clusters(graph, 0.95)
        assert all(len(c) == 1 for c in clusters)

    def test_duplicates_keep_highest_rated(self):
        clusters = [{"h1", "h2", "h3"}]
        elos = {"h1": 1250.0, "h2": 1300.0, "h3": 1200.0}
        doomed = duplicate_ids(clusters, lambda h: elos.get(h))
        assert set(doomed) == {"h1", "h3"}
