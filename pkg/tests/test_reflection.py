from __future__ import annotations

import pytest

from hypogen.agents.reflection import (
    ReviewRequest,
    deep_verification_review,
    full_review,
    initial_review,
    observation_review,
    parse_scores,
    simulation_review,
    tournament_recurrent_review,
)
from hypogen.core import (
    Hypothesis,
    HypothesisOrigin,
    HypothesisState,
    ObservationLabel,
    ReviewKind,
    ReviewVerdict,
)
from hypogen.errors import (
    EmptyDecomposition,
    MissingDigest,
    ScoreUnparseable,
    SourceUnavailable,
)
from hypogen.gateway import MockScript, MockScriptEntry, ScriptedBackend


def hypothesis(content: str = "candidate mechanism text") -> Hypothesis:
    return Hypothesis(
        id="h-0001",
        session_id="s",
        content=content,
        origin=HypothesisOrigin.GENERATED_LITERATURE,
        created_seq=1,
        state=HypothesisState.UNDER_INITIAL_REVIEW,
    )


def request(plan, kind=ReviewKind.INITIAL, **overrides) -> ReviewRequest:
    defaults = dict(hypothesis=hypothesis(), kind=kind, plan=plan, goal="goal text")
    defaults.update(overrides)
    return ReviewRequest(**defaults)


def scripted(response: str) -> ScriptedBackend:
    return ScriptedBackend(MockScript(default_response=response))


ACCEPT_ALL = "Looks strong.\nCorrectness: 5\nQuality: 5\nNovelty: 5\nSafety: 5\nVerdict: accept"


class TestParseScores:
    def test_happy(self):
        scores = parse_scores(ACCEPT_ALL)
        assert scores == {"correctness": 5, "quality": 5, "novelty": 5, "safety": 5}

    def test_out_of_range(self):
        with pytest.raises(ScoreUnparseable):
            parse_scores("Correctness: 7\nQuality: 5\nNovelty: 5\nSafety: 5")

    def test_missing(self):
        with pytest.raises(ScoreUnparseable):
            parse_scores("Correctness: 4")


class TestInitialReview:
    def test_all_fives_accept(self, plan):
        review, calls = initial_review(request(plan), scripted(ACCEPT_ALL), review_id="r-0001")
        assert review.verdict == ReviewVerdict.ACCEPT
        assert set(review.scores.values()) == {5}
        assert review.kind == ReviewKind.INITIAL
        assert calls == 1

    def test_low_correctness_rejects(self, plan):
        text = "Flawed.\nCorrectness: 1\nQuality: 4\nNovelty: 4\nSafety: 5\nVerdict: reject"
        review, _ = initial_review(request(plan), scripted(text), review_id="r-0001")
        assert review.verdict == ReviewVerdict.REJECT

    def test_threshold_rejects_even_on_model_accept(self, plan):
        text = "Meh.\nCorrectness: 2\nQuality: 4\nNovelty: 4\nSafety: 5\nVerdict: accept"
        review, _ = initial_review(request(plan), scripted(text), review_id="r-0001")
        assert review.verdict == ReviewVerdict.REJECT

    def test_score_out_of_range_reprompts_then_fails(self, plan):
        backend = scripted("Correctness: 7\nQuality: 5\nNovelty: 5\nSafety: 5\nVerdict: accept")
        with pytest.raises(ScoreUnparseable):
            initial_review(request(plan), backend, review_id="r-0001")

    def test_never_touches_literature(self, plan):
        calls = {"n": 0}

        class CountingSource:
            def search(self, query, limit=5):
                calls["n"] += 1
                return []

            def fetch(self, doc_id):
                calls["n"] += 1
                return ""

        # initial_review's signature admits no literature source at all; this
        # asserts the stronger property that nothing reaches one indirectly.
        initial_review(request(plan), scripted(ACCEPT_ALL), review_id="r-0001")
        assert calls["n"] == 0

    def test_critique_in_prompt(self, plan):
        captured = []

        class Recorder(ScriptedBackend):
            def complete(self, req):
                captured.append(req.prompt())
                return super().complete(req)

        backend = Recorder(MockScript(default_response=ACCEPT_ALL))
        critique = "Recurring issue: controls missing."
        initial_review(request(plan, meta_critique=critique), backend, review_id="r-0001")
        assert critique in captured[0]


class TestFullReview:
    def test_cites_fixture_doc_ids(self, plan, corpus):
        captured = []

        class Recorder(ScriptedBackend):
            def complete(self, req):
                captured.append(req)
                return super().complete(req)

        backend = Recorder(MockScript(default_response=ACCEPT_ALL))
        req = request(
            plan,
            kind=ReviewKind.FULL,
            hypothesis=hypothesis("nuclear pore ALS transport question"),
        )
        review, _ = full_review(req, backend, corpus, review_id="r-0002")
        assert review.kind == ReviewKind.FULL
        assert not review.warning_flags
        articles_binding = captured[0].bindings["articles"]
        assert "doc-npc-phospho" in articles_binding

    def test_unavailable_source_degrades_with_warning(self, plan):
        class Broken:
            def search(self, query, limit=5):
                raise SourceUnavailable("down")

            def fetch(self, doc_id):
                raise SourceUnavailable("down")

        review, _ = full_review(
            request(plan, kind=ReviewKind.FULL), scripted(ACCEPT_ALL), Broken(), review_id="r-0002"
        )
        assert "literature_unavailable" in review.warning_flags
        assert review.scores

    def test_scores_recorded(self, plan, corpus):
        text = "ok\nCorrectness: 4\nQuality: 4\nNovelty: 3\nSafety: 5\nVerdict: accept"
        review, _ = full_review(
            request(plan, kind=ReviewKind.FULL), scripted(text), corpus, review_id="r-0002"
        )
        assert review.scores["novelty"] == 3


class TestDeepVerification:
    def test_non_fundamental_flaw_accepts(self, plan):
        text = (
            "Assumption: a1 | valid: yes | fundamental: yes | note: fine\n"
            "Assumption: a2 | valid: no | fundamental: no | note: fixable\n"
            "Assumption: a3 | valid: yes | fundamental: no | note: fine\n"
            "Verdict: accept"
        )
        review, _ = deep_verification_review(
            request(plan, kind=ReviewKind.DEEP_VERIFICATION), scripted(text), review_id="r-0003"
        )
        assert review.verdict == ReviewVerdict.ACCEPT
        assert len(review.assumptions) == 3
        assert any(not a.valid and not a.fundamental for a in review.assumptions)

    def test_fundamental_flaw_rejects(self, plan):
        text = "Assumption: core premise | valid: no | fundamental: yes | note: contradicted\nVerdict: accept"
        review, _ = deep_verification_review(
            request(plan, kind=ReviewKind.DEEP_VERIFICATION), scripted(text), review_id="r-0003"
        )
        assert review.verdict == ReviewVerdict.REJECT

    def test_empty_decomposition(self, plan):
        with pytest.raises(EmptyDecomposition):
            deep_verification_review(
                request(plan, kind=ReviewKind.DEEP_VERIFICATION),
                scripted("no structured lines"),
                review_id="r-0003",
            )


class TestObservationReview:
    def test_missing_piece_produces_annotation(self, plan):
        text = "reasoning...\nhypothesis: missing piece"
        review, annotation, _ = observation_review(
            request(plan, kind=ReviewKind.OBSERVATION),
            scripted(text),
            [("doc-1", "article text")],
            review_id="r-0004",
        )
        assert review.observation_label == ObservationLabel.MISSING_PIECE
        assert annotation and "doc-1" in annotation

    def test_all_neutral_no_annotation(self, plan):
        review, annotation, _ = observation_review(
            request(plan, kind=ReviewKind.OBSERVATION),
            scripted("hypothesis: neutral"),
            [("doc-1", "a"), ("doc-2", "b")],
            review_id="r-0004",
        )
        assert review.verdict == ReviewVerdict.INFORMATIONAL
        assert review.observation_label == ObservationLabel.NEUTRAL
        assert annotation is None

    def test_requires_articles(self, plan):
        with pytest.raises(ValueError):
            observation_review(
                request(plan, kind=ReviewKind.OBSERVATION), scripted("x"), [], review_id="r-0004"
            )

    def test_content_untouched(self, plan):
        req = request(plan, kind=ReviewKind.OBSERVATION)
        before = req.hypothesis.content_hash or req.hypothesis.content
        observation_review(
            req, scripted("hypothesis: missing piece"), [("d", "t")], review_id="r-0004"
        )
        assert (req.hypothesis.content_hash or req.hypothesis.content) == before


class TestSimulationReview:
    def test_two_failures_listed(self, plan):
        text = "walkthrough\nFailure scenario: decay too fast.\nFailure scenario: off-target."
        review, _ = simulation_review(
            request(plan, kind=ReviewKind.SIMULATION), scripted(text), review_id="r-0005"
        )
        assert review.body.count("Failure scenario:") >= 2

    def test_no_failures_informational(self, plan):
        review, _ = simulation_review(
            request(plan, kind=ReviewKind.SIMULATION),
            scripted("No failure scenarios identified."),
            review_id="r-0005",
        )
        assert review.verdict == ReviewVerdict.INFORMATIONAL


class TestRecurrentReview:
    def test_references_digest_item(self, plan):
        digest = "Recurring issue: missing BBB permeability analysis"
        backend = scripted(
            "Given the digest, the hypothesis should address "
            "recurring issue: missing bbb permeability analysis explicitly."
        )
        review, _ = tournament_recurrent_review(
            request(plan, kind=ReviewKind.TOURNAMENT_RECURRENT, tournament_digest=digest),
            backend,
            review_id="r-0006",
        )
        assert review.kind == ReviewKind.TOURNAMENT_RECURRENT
        assert not review.warning_flags

    def test_missing_digest(self, plan):
        with pytest.raises(MissingDigest):
            tournament_recurrent_review(
                request(plan, kind=ReviewKind.TOURNAMENT_RECURRENT),
                scripted("x"),
                review_id="r-0006",
            )

    def test_empty_digest_treated_as_missing(self, plan):
        with pytest.raises(MissingDigest):
            tournament_recurrent_review(
                request(plan, kind=ReviewKind.TOURNAMENT_RECURRENT, tournament_digest="  "),
                scripted("x"),
                review_id="r-0006",
            )
