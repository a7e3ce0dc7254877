"""Synthetic deterministic backend for desk-scale end-to-end runs.

``SimBackend`` answers every template in the registry with plausible,
structured text derived purely from the request (seeded hashing), so whole
sessions replay byte-identically. Generated hypotheses carry a hidden
quality marker ``[q=0.1234]``; judges prefer the higher quality, reviews
score it, and evolution strictly improves it. That hidden variable is what
lets the test suite exercise tournament convergence and compute-scaling
trends without a real model.
"""

from __future__ import annotations

import hashlib
import json
import re

from .gateway import ModelRequest, ModelResponse

QUALITY_RE = re.compile(r"\[q=(\d+\.\d+)\]")

#: Additive quality margin each evolution step adds over its best parent.
EVOLUTION_GAIN = 0.15

#: Evolved quality also rides a floor that grows with session progress
#: (parsed from the request trace), standing in for the self-improvement
#: feedback loops: later refinements are better than earlier ones.
QUALITY_FLOOR_BASE = 0.75
QUALITY_FLOOR_SLOPE = 0.003

_TRACE_SEQ_RE = re.compile(r"\x1e[a-z]+-0*(\d+)")


def _trace_seq(salt: str) -> int:
    match = _TRACE_SEQ_RE.search(salt)
    return int(match.group(1)) if match else 0

_TOPICS = (
    "protein aggregation kinetics",
    "nucleocytoplasmic transport",
    "microbial gene transfer",
    "synaptic pruning pathways",
    "mitochondrial stress response",
    "epigenetic silencing dynamics",
    "extracellular vesicle signaling",
    "ion channel phosphoregulation",
)

_MECHANISMS = (
    "post-translational modification of a core transport factor",
    "feedback inhibition in a stress-response cascade",
    "competitive binding at a shared scaffold site",
    "phase-separation driven sequestration",
    "receptor cross-talk under chronic stimulation",
    "metabolite-gated enzymatic switching",
)


def embed_quality(text: str, quality: float) -> str:
    return f"{text}\n[q={quality:.4f}]"


def extract_quality(text: str, default: float = 0.5) -> float:
    last = None
    for match in QUALITY_RE.finditer(text):
        last = match
    return float(last.group(1)) if last else default


def _digest(seed: int, *parts: str) -> bytes:
    h = hashlib.sha256()
    h.update(str(seed).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(part.encode("utf-8", errors="replace"))
    return h.digest()


def _unit(seed: int, *parts: str) -> float:
    """Deterministic float in [0, 1) from the seed and parts."""
    raw = int.from_bytes(_digest(seed, *parts)[:8], "big")
    return raw / 2**64


def _pick(seed: int, options: tuple[str, ...], *parts: str) -> str:
    raw = int.from_bytes(_digest(seed, *parts)[:8], "big")
    return options[raw % len(options)]


def _jaccard(a: str, b: str) -> float:
    ta = set(re.findall(r"[a-z0-9]+", QUALITY_RE.sub("", a).lower()))
    tb = set(re.findall(r"[a-z0-9]+", QUALITY_RE.sub("", b).lower()))
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def _count_turns(transcript: str) -> int:
    return len(re.findall(r"(?m)^Turn \d+:", transcript))


class SimBackend:
    """Pure-function synthetic model; see module docstring."""

    backend_id = "sim"

    def __init__(
        self,
        seed: int = 0,
        unsafe_marker: str = "[UNSAFE]",
        flawed_marker: str = "[FLAWED]",
        debate_marker_turn: int = 3,
        judge_mode: str = "deterministic",
        quality_elo_scale: float = 800.0,
        judge_saturation: float = 0.5,
    ) -> None:
        self.seed = seed
        self.unsafe_marker = unsafe_marker
        self.flawed_marker = flawed_marker
        self.debate_marker_turn = debate_marker_turn
        # "deterministic": higher quality always wins. "elo": win odds follow
        # the logistic law rating updates assume, so ratings converge to an
        # affine image of quality. Judge sensitivity saturates beyond
        # judge_saturation quality units, which keeps the equilibrium rating
        # spread within reach of a finite tournament.
        self.judge_mode = judge_mode
        self.quality_elo_scale = quality_elo_scale
        self.judge_saturation = judge_saturation

    def complete(self, request: ModelRequest) -> ModelResponse:
        prompt = request.prompt()  # surfaces MissingBinding like a real call
        # A real model samples differently per call; the deterministic stand-in
        # is the caller-supplied trace id, folded into the hash inputs.
        salted = f"{prompt}\x1e{request.trace_id}" if request.trace_id else prompt
        handler = getattr(self, f"_{request.template_id}", None)
        text = handler(request.bindings, salted) if handler else self._default(salted)
        return ModelResponse(text=text, backend_id=self.backend_id, latency=0.0)

    # -- generation ---------------------------------------------------

    def _fresh_quality(self, prompt: str) -> float:
        return 0.30 + 0.40 * _unit(self.seed, "quality", prompt)

    def _hypothesis_text(self, prompt: str, lead: str) -> str:
        topic = _pick(self.seed, _TOPICS, "topic", prompt)
        mechanism = _pick(self.seed, _MECHANISMS, "mech", prompt)
        tag = _digest(self.seed, "tag", prompt)[:3].hex()
        body = (
            f"{lead} {topic} is driven by {mechanism} (variant {tag}). "
            f"Perturbing this mechanism should produce a measurable shift in "
            f"{topic} under controlled conditions, testable with a targeted "
            f"loss-of-function experiment followed by rescue."
        )
        return embed_quality(body, self._fresh_quality(prompt))

    def _goal_parse(self, bindings: dict[str, str], prompt: str) -> str:
        return json.dumps(
            {
                "preferences": "Focus on providing a novel hypothesis, with "
                "detailed explanation of the mechanism of action.",
                "attributes": ["Novelty", "Feasibility"],
                "constraints": ["should be correct", "should be novel"],
                "evaluation_criteria": [
                    {"name": "novelty", "rubric": "prefer unexplored mechanisms"},
                    {"name": "feasibility", "rubric": "testable with standard assays"},
                ],
                "output_format": None,
            }
        )

    def _generation_literature(self, bindings: dict[str, str], prompt: str) -> str:
        return self._hypothesis_text(prompt, "We hypothesize that")

    def _generation_debate(self, bindings: dict[str, str], prompt: str) -> str:
        turns = _count_turns(bindings.get("transcript", ""))
        if turns + 1 >= self.debate_marker_turn:
            final = self._hypothesis_text(prompt, "The panel converges on:")
            return f"The panel agrees the strongest refinement stands.\nHYPOTHESIS\n{final}"
        if turns == 0:
            return (
                "Proposing three distinct candidate hypotheses for discussion, "
                "each varying the causal entry point; the second looks most robust."
            )
        return (
            "Clarifying questions raised on entity specificity; the refined "
            "candidate narrows the mechanism and adds a rescue control."
        )

    def _generation_assumptions_chain(self, bindings: dict[str, str], prompt: str) -> str:
        a = _pick(self.seed, _TOPICS, "as1", prompt)
        b = _pick(self.seed, _MECHANISMS, "as2", prompt)
        return (
            f"1. {a} is rate-limiting under stress conditions.\n"
            f"   - measurable within 48h in culture\n"
            f"2. {b} is the proximal trigger.\n"
            f"   - blockable with a selective inhibitor\n"
        )

    def _generation_assumptions_aggregate(self, bindings: dict[str, str], prompt: str) -> str:
        chain = bindings.get("assumptions", "").strip()
        body = (
            "Aggregating the assumption chain into one testable claim:\n"
            f"{chain}\n"
            "Jointly these imply a single intervention point whose blockade "
            "should abolish the downstream phenotype."
        )
        return embed_quality(body, self._fresh_quality(prompt))

    def _generation_expansion(self, bindings: dict[str, str], prompt: str) -> str:
        overview = bindings.get("overview", "")
        area = "unexplored directions"
        for line in overview.splitlines():
            if line.lower().startswith("area:"):
                area = line.split(":", 1)[1].strip()
                break
        hypothesis = self._hypothesis_text(prompt, "Extending the area, we posit that")
        return f"Area: {area}\n{hypothesis}"

    def _summarize_hypothesis(self, bindings: dict[str, str], prompt: str) -> str:
        content = QUALITY_RE.sub("", bindings.get("hypothesis", "")).strip()
        words = content.split()
        summary = " ".join(words[:12]) if words else "no content"
        category = _pick(self.seed, _TOPICS, "cat", prompt)
        return f"Summary: {summary}\nCategory: {category}"

    def _debate_finalize(self, bindings: dict[str, str], prompt: str) -> str:
        return self._hypothesis_text(prompt, "Finalizing the strongest candidate:")

    # -- reflection ---------------------------------------------------

    def _score_lines(self, quality: float, flawed: bool) -> str:
        if flawed:
            return "Correctness: 1\nQuality: 2\nNovelty: 3\nSafety: 5\nVerdict: reject"
        base = max(1, min(5, round(1 + 4 * quality)))
        novelty = max(1, min(5, base + (1 if quality > 0.6 else 0)))
        return (
            f"Correctness: {base}\nQuality: {base}\nNovelty: {novelty}\n"
            f"Safety: 5\nVerdict: accept"
        )

    def _reflection_initial(self, bindings: dict[str, str], prompt: str) -> str:
        content = bindings.get("hypothesis", "")
        quality = extract_quality(content)
        flawed = self.flawed_marker in content
        critique = (
            "The mechanism is stated concretely and the proposed test is "
            "within reach of standard assays."
            if not flawed
            else "The causal chain contradicts well-established results."
        )
        return f"{critique}\n{self._score_lines(quality, flawed)}"

    def _reflection_full(self, bindings: dict[str, str], prompt: str) -> str:
        content = bindings.get("hypothesis", "")
        articles = bindings.get("articles", "")
        quality = extract_quality(content)
        doc_ids = re.findall(r"\[(doc-[a-z0-9\-]+)\]", articles)
        cited = (
            "\n".join(f"[{d}] directly relevant to the proposed mechanism" for d in doc_ids[:3])
            or "no articles retrieved"
        )
        return (
            f"Related articles:\n{cited}\n"
            "Assumptions:\n1. The upstream trigger is stress-dependent (plausible).\n"
            "2. The effect is cell-autonomous (plausible).\n"
            "Aspects already explored:\n- The general pathway is documented.\n"
            "Novel aspects:\n- The specific coupling proposed here is not described.\n"
            f"{self._score_lines(quality, self.flawed_marker in content)}"
        )

    def _reflection_deep_verification(self, bindings: dict[str, str], prompt: str) -> str:
        content = bindings.get("hypothesis", "")
        if "[BAD-ASSUMPTION]" in content:
            return (
                "Assumption: the trigger precedes the phenotype | valid: no | "
                "fundamental: yes | note: contradicted by longitudinal data\n"
                "Verdict: reject"
            )
        return (
            "Assumption: the trigger precedes the phenotype | valid: yes | "
            "fundamental: yes | note: supported by time-course reasoning\n"
            "Assumption: the readout is linear in dose | valid: no | "
            "fundamental: no | note: saturable but fixable in design\n"
            "Verdict: accept"
        )

    def _reflection_observation(self, bindings: dict[str, str], prompt: str) -> str:
        content = bindings.get("hypothesis", "")
        label = "missing piece" if "[MISSING-PIECE]" in content else "neutral"
        return (
            "would we see this observation if the hypothesis was true: plausibly.\n"
            "would we see some of the observations if the hypothesis was true: yes.\n"
            "does some observations disprove the hypothesis: no.\n"
            f"hypothesis: {label}"
        )

    def _reflection_simulation(self, bindings: dict[str, str], prompt: str) -> str:
        quality = extract_quality(bindings.get("hypothesis", ""))
        if quality >= 0.55:
            return "Step-wise walk-through completed. No failure scenarios identified."
        return (
            "Step-wise walk-through completed.\n"
            "Failure scenario: the intermediate signal may decay before detection.\n"
            "Failure scenario: off-target effects could mask the readout."
        )

    def _reflection_recurrent(self, bindings: dict[str, str], prompt: str) -> str:
        digest = bindings.get("digest", "").strip().splitlines()
        first = digest[0] if digest else "no recurring issues on record"
        return (
            f"Revisiting the review in light of tournament evidence: {first}. "
            "The hypothesis holds up but should address that issue explicitly."
        )

    # -- ranking / proximity -------------------------------------------

    def _judge(self, bindings: dict[str, str], phrase: str, salt: str) -> str:
        qa = extract_quality(bindings.get("hypothesis_1", ""))
        qb = extract_quality(bindings.get("hypothesis_2", ""))
        if self.judge_mode == "elo":
            diff = max(-self.judge_saturation, min(self.judge_saturation, qa - qb))
            p_first = 1.0 / (1.0 + 10.0 ** (-diff * self.quality_elo_scale / 400.0))
            pick = 1 if _unit(self.seed, "judge", salt) < p_first else 2
        else:
            pick = 1 if qa >= qb else 2
        return (
            "Both hypotheses address the goal; weighing mechanism specificity, "
            f"testability, and novelty, hypothesis {pick} is stronger.\n"
            f"{phrase}: {pick}"
        )

    def _match_single_turn(self, bindings: dict[str, str], prompt: str) -> str:
        return self._judge(bindings, "better hypothesis", prompt)

    def _match_debate(self, bindings: dict[str, str], prompt: str) -> str:
        turns = _count_turns(bindings.get("notes", ""))
        if turns + 1 >= 2:
            return self._judge(bindings, "better idea", prompt)
        return (
            "Summarizing both hypotheses and their reviews; open questions "
            "remain on dose-response specificity for each."
        )

    def _similarity(self, bindings: dict[str, str], prompt: str) -> str:
        value = _jaccard(bindings.get("hypothesis_1", ""), bindings.get("hypothesis_2", ""))
        return f"Overlap in entities and mechanism considered.\nsimilarity: {value:.2f}"

    # -- evolution ------------------------------------------------------

    def _evolved(self, bindings: dict[str, str], prompt: str, parents_key: str, lead: str) -> str:
        source = bindings.get(parents_key, "")
        parent_q = max(
            (float(m) for m in QUALITY_RE.findall(source)),
            default=self._fresh_quality(prompt),
        )
        floor = QUALITY_FLOOR_BASE + QUALITY_FLOOR_SLOPE * _trace_seq(prompt)
        child_q = max(parent_q + EVOLUTION_GAIN, floor)
        topic = _pick(self.seed, _TOPICS, "evotopic", prompt)
        tag = _digest(self.seed, "evotag", prompt)[:3].hex()
        # Refinements share most of their wording on purpose: the proximity
        # graph should cluster a lineage so de-duplication retires superseded
        # members and keeps the tournament focused on the current front.
        body = (
            f"{lead} Building on the source hypothesis, the refined claim "
            f"sharpens the causal step in {topic} (revision {tag}). It names "
            f"the direct molecular interaction, fixes the dose and exposure "
            f"window, adds a quantitative readout with explicit controls, and "
            f"specifies the rescue condition that would falsify the claim if "
            f"the proposed mechanism were wrong."
        )
        return embed_quality(body, child_q)

    def _evolution_grounding(self, b: dict[str, str], p: str) -> str:
        return self._evolved(b, p, "hypothesis", "Grounded refinement:")

    def _evolution_feasibility(self, b: dict[str, str], p: str) -> str:
        return self._evolved(b, p, "hypothesis", "Feasibility-focused refinement:")

    def _evolution_inspiration(self, b: dict[str, str], p: str) -> str:
        return self._evolved(b, p, "hypothesis", "Inspired successor:")

    def _evolution_combination(self, b: dict[str, str], p: str) -> str:
        return self._evolved(b, p, "hypotheses", "Combined synthesis:")

    def _evolution_simplification(self, b: dict[str, str], p: str) -> str:
        return self._evolved(b, p, "hypothesis", "Simplified form:")

    def _evolution_out_of_box(self, b: dict[str, str], p: str) -> str:
        return self._evolved(b, p, "hypotheses", "Analogy-driven departure:")

    # -- meta review ------------------------------------------------------

    def _meta_review(self, bindings: dict[str, str], prompt: str) -> str:
        n = len(re.findall(r"(?m)^\[review ", bindings.get("reviews", "")))
        return (
            f"Meta-analysis over {n} reviews.\n"
            "Recurring critique points:\n"
            "1. Mechanistic specificity is frequently insufficient.\n"
            "2. Experimental plans often lack rescue controls.\n"
            "Actionable insight: state the causal entity and its direct readout."
        )

    def _research_overview(self, bindings: dict[str, str], prompt: str) -> str:
        tops = bindings.get("top_hypotheses", "")
        first_topic = _pick(self.seed, _TOPICS, "ov1", tops)
        second_topic = _pick(self.seed, _TOPICS, "ov2", tops + "x")
        return (
            f"Area: {first_topic.title()}\n"
            "Rationale: top-ranked hypotheses concentrate here with testable claims.\n"
            f"Example topics: {first_topic} under stress; dose-response mapping\n"
            "Suggested experiments: loss-of-function with rescue; time-course assay\n"
            f"Area: {second_topic.title()}\n"
            "Rationale: adjacent mechanism space remains under-explored.\n"
            f"Example topics: {second_topic} coupling; biomarker discovery\n"
            "Suggested experiments: comparative profiling; perturbation screen\n"
        )

    def _research_contacts(self, bindings: dict[str, str], prompt: str) -> str:
        overview = bindings.get("overview", "")
        areas = [
            line.split(":", 1)[1].strip()
            for line in overview.splitlines()
            if line.lower().startswith("area:")
        ] or ["General"]
        lines = []
        for i, area in enumerate(areas[:3], start=1):
            lines.append(
                f"Contact: Dr. Reviewer-{i} | Area: {area} | Rationale: published "
                f"methodology directly applicable to {area.lower()}"
            )
        return "\n".join(lines)

    def _tournament_digest(self, bindings: dict[str, str], prompt: str) -> str:
        summary = bindings.get("matches_summary", "").strip().splitlines()
        head = summary[0] if summary else "no matches recorded"
        return (
            f"Pattern summary: {head}\n"
            "Recurring issue: judges reward explicit rescue controls.\n"
            "Recurring issue: vague dosing regimes lose close matches."
        )

    # -- safety -----------------------------------------------------------

    def _safety(self, subject: str) -> str:
        if self.unsafe_marker in subject:
            return (
                "Reasoning: the stated direction could plausibly enable harmful "
                "misuse and lacks a mitigating framing; the risk outweighs the "
                "research benefit.\nVerdict: rejected"
            )
        return (
            "Reasoning: the stated direction targets basic mechanistic "
            "understanding with standard laboratory methods and presents no "
            "plausible misuse pathway.\nVerdict: approved"
        )

    def _safety_goal(self, bindings: dict[str, str], prompt: str) -> str:
        return self._safety(bindings.get("goal", ""))

    def _safety_hypothesis(self, bindings: dict[str, str], prompt: str) -> str:
        return self._safety(bindings.get("hypothesis", ""))

    def _safety_direction(self, bindings: dict[str, str], prompt: str) -> str:
        return self._safety(bindings.get("overview", ""))

    def _default(self, prompt: str) -> str:
        return f"Acknowledged. ({_digest(self.seed, 'default', prompt)[:4].hex()})"
