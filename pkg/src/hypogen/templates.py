"""Versioned prompt template registry.

Templates use ``{name}`` placeholders restricted to ``[a-z][a-z0-9_]*``.
Rendering substitutes every placeholder verbatim and fails on a missing
binding; any other brace content in a template is left untouched.
"""

from __future__ import annotations

import re

from .errors import MissingBinding, UnknownTemplate

PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")


GOAL_PARSE = """\
You are configuring a research assistant for a scientist's objective.
Parse the research goal below into a research plan configuration.

Research goal:
{goal}

Respond with a JSON object with the keys:
  "preferences": one paragraph describing what a strong proposal looks like,
  "attributes": list of short attribute tags (e.g. "Novelty", "Feasibility"),
  "constraints": list of constraint statements,
  "evaluation_criteria": list of {"name": ..., "rubric": ...} objects,
  "output_format": optional format directive or null.

JSON:
"""


GENERATION_LITERATURE = """\
You are an expert tasked with formulating a novel and robust hypothesis to address
the following objective.

Describe the proposed hypothesis in detail, including specific entities, mechanisms,
and anticipated outcomes.

This description is intended for an audience of domain experts.

You have conducted a thorough review of relevant literature and developed a logical framework
for addressing the objective. The articles consulted, along with your analytical reasoning,
are provided below.

Goal: {goal}

Criteria for a strong hypothesis:
{preferences}

Existing hypothesis (if applicable):
{source_hypothesis}

{instructions}

Literature review and analytical rationale (chronologically ordered, beginning
with the most recent analysis):

{articles_with_reasoning}

Proposed hypothesis (detailed description for domain experts):
"""


GENERATION_DEBATE = """\
You are an expert participating in a collaborative discourse concerning the generation
of a {idea_attributes} hypothesis. You will engage in a simulated discussion with other experts.
The overarching objective of this discourse is to collaboratively develop a novel
and robust {idea_attributes} hypothesis.

Goal: {goal}

Criteria for a high-quality hypothesis:
{preferences}

Instructions:
{instructions}

Review Overview:
{reviews_overview}

Procedure:

Initial contribution (if initiating the discussion):
    Propose three distinct {idea_attributes} hypotheses.

Subsequent contributions (continuing the discussion):
    * Pose clarifying questions if ambiguities or uncertainties arise.
    * Critically evaluate the hypotheses proposed thus far, addressing the following aspects:
        -  Adherence to {idea_attributes} criteria.
        -  Utility and practicality.
        -  Level of detail and specificity.
    * Identify any weaknesses or potential limitations.
    * Propose concrete improvements and refinements to address identified weaknesses.
    * Conclude your response with a refined iteration of the hypothesis.

General guidelines:
    * Exhibit boldness and creativity in your contributions.
    * Maintain a helpful and collaborative approach.
    * Prioritize the generation of a high-quality {idea_attributes} hypothesis.

Termination condition:
    When sufficient discussion has transpired (typically 3-5 conversational turns,
    with a maximum of 10 turns) and all relevant questions and points have been
    thoroughly addressed and clarified, conclude the process by writing "HYPOTHESIS"
    (in all capital letters) followed by a concise and self-contained exposition of the finalized idea.

#BEGIN TRANSCRIPT#
{transcript}
#END TRANSCRIPT#

Your Turn:
"""


GENERATION_ASSUMPTIONS_CHAIN = """\
You are an expert researcher decomposing a research objective into testable
intermediate assumptions via conditional reasoning hops.

Goal: {goal}

Criteria for useful assumptions:
{preferences}

Instructions:
{instructions}

List the plausible intermediate assumptions which, if proven true, would lead to
novel scientific discovery for the goal. Number each assumption. Indent
sub-assumptions beneath their parent with a leading dash.

Assumptions:
"""


GENERATION_ASSUMPTIONS_AGGREGATE = """\
You are an expert researcher. Aggregate the testable intermediate assumptions
below into a complete, self-contained research hypothesis addressing the goal.

Goal: {goal}

Criteria for a strong hypothesis:
{preferences}

Identified assumptions:
{assumptions}

Complete hypothesis (detailed description for domain experts):
"""


GENERATION_EXPANSION = """\
You are an expert researcher exploring previously unexplored areas of the
hypothesis space for the stated goal.

Goal: {goal}

Criteria for a strong hypothesis:
{preferences}

Instructions:
{instructions}

Current research overview:
{overview}

Summaries of existing hypotheses:
{existing_summaries}

Identify an under-explored direction from the overview and propose a detailed
hypothesis extending it. Begin your answer with the line "Area: <overview area
title>" and then describe the hypothesis.

Response:
"""


SUMMARIZE_HYPOTHESIS = """\
Summarize the research hypothesis below for a quick-scan dashboard.

Hypothesis:
{hypothesis}

Respond with exactly two lines:
Summary: <one sentence>
Category: <short free-text tag>
"""


DEBATE_FINALIZE = """\
The expert discussion below ran out of turns without a finalized hypothesis.
Extract and finalize the single strongest hypothesis from the discussion.

#BEGIN TRANSCRIPT#
{transcript}
#END TRANSCRIPT#

Finalized hypothesis (concise and self-contained):
"""


REFLECTION_INITIAL = """\
You are a scientific peer reviewer performing a quick initial screen of a
research hypothesis. Do not use external tools or literature; judge from the
text alone. The aim is to quickly discard flawed, non-novel, or otherwise
unsuitable hypotheses.

Goal: {goal}

Evaluation preferences:
{preferences}

Reviewer feedback from prior meta-analysis:
{feedback}

Hypothesis:
{hypothesis}

Respond with a short critique followed by exactly five final lines:
Correctness: <1-5>
Quality: <1-5>
Novelty: <1-5>
Safety: <1-5>
Verdict: <accept or reject>
"""


REFLECTION_FULL = """\
You are a scientific peer reviewer performing a full review of a research
hypothesis with literature grounding. Scrutinize underlying assumptions and
reasoning for correctness and quality; for novelty, summarize known aspects
and judge them against the articles provided.

Goal: {goal}

Evaluation preferences:
{preferences}

Reviewer feedback from prior meta-analysis:
{feedback}

Hypothesis:
{hypothesis}

Relevant articles:
{articles}

Structure your review with these sections:
Related articles: <cited doc ids with one-line relevance notes>
Assumptions: <numbered list, each with a plausibility judgment>
Aspects already explored: <bullet list>
Novel aspects: <bullet list>

Then conclude with exactly five final lines:
Correctness: <1-5>
Quality: <1-5>
Novelty: <1-5>
Safety: <1-5>
Verdict: <accept or reject>
"""


REFLECTION_DEEP_VERIFICATION = """\
You are a scientific reviewer conducting a deep verification of a research
hypothesis. Decompose the hypothesis into its constituent assumptions. Break
each assumption into fundamental sub-assumptions, decontextualize them, and
evaluate each independently for correctness. An identified error does not
necessarily invalidate the core hypothesis: state whether each incorrect
assumption is fundamental to the hypothesis.

Goal: {goal}

Reviewer feedback from prior meta-analysis:
{feedback}

Hypothesis:
{hypothesis}

For each assumption output one line in the form:
Assumption: <statement> | valid: <yes/no> | fundamental: <yes/no> | note: <short justification>

Finish with one line:
Verdict: <accept or reject>
"""


REFLECTION_OBSERVATION = """\
You are an expert in scientific hypothesis evaluation. Your task is to analyze the
relationship between a provided hypothesis and observations from a scientific article.
Specifically, determine if the hypothesis provides a novel causal explanation
for the observations, or if they contradict it.

Instructions:

1.  Observation extraction: list relevant observations from the article.
2.  Causal analysis (individual): for each observation:
    a.  State if its cause is already established.
    b.  Assess if the hypothesis could be a causal factor (hypothesis => observation).
    c.  Start with: "would we see this observation if the hypothesis was true:".
    d.  Explain if it's a novel explanation. If not, or if a better explanation exists,
        state: "not a missing piece."
3.  Causal analysis (summary): determine if the hypothesis offers a novel explanation
    for a subset of observations. Include reasoning. Start with: "would we see some of
    the observations if the hypothesis was true:".
4.  Disproof analysis: determine if any observations contradict the hypothesis.
    Start with: "does some observations disprove the hypothesis:".
5.  Conclusion: state: "hypothesis: <already explained, other explanations more likely,
    missing piece, neutral, or disproved>".

Scoring:
    *   Already explained: hypothesis consistent, but causes are known. No novel explanation.
    *   Other explanations more likely: hypothesis *could* explain, but better explanations exist.
    *   Missing piece: hypothesis offers a novel, plausible explanation.
    *   Neutral: hypothesis neither explains nor is contradicted.
    *   Disproved: observations contradict the hypothesis.

Important: if observations are expected regardless of the hypothesis, and don't disprove it,
it's neutral.

Article:
{article}

Hypothesis:
{hypothesis}

Response (provide reasoning; end with: "hypothesis: <already explained, other explanations
more likely, missing piece, neutral, or disproved>"):
"""


REFLECTION_SIMULATION = """\
You are a scientific reviewer stress-testing a research hypothesis by
simulating it in a step-wise fashion: walk through the proposed mechanism of
action or experiment step by step and identify where it could break down.

Goal: {goal}

Reviewer feedback from prior meta-analysis:
{feedback}

Hypothesis:
{hypothesis}

Walk through the steps, then list each potential failure as one line starting
with "Failure scenario:". If the walk-through surfaces none, state "No failure
scenarios identified."
"""


REFLECTION_RECURRENT = """\
You are a scientific reviewer updating your assessment of a hypothesis in
light of accumulated tournament results. Identify recurring issues and
improvement opportunities from the digest and refine the review accordingly.
Reference at least one recurring issue from the digest explicitly.

Goal: {goal}

Reviewer feedback from prior meta-analysis:
{feedback}

Tournament digest:
{digest}

Hypothesis:
{hypothesis}

Updated review:
"""


MATCH_SINGLE_TURN = """\
You are an expert evaluator tasked with comparing two hypotheses.

Evaluate the two provided hypotheses (hypothesis 1 and hypothesis 2) and determine which one
is superior based on the specified {idea_attributes}.
Provide a concise rationale for your selection, concluding with the phrase "better idea: <1 or 2>".

Goal: {goal}

Evaluation criteria:
{preferences}

Considerations:
{notes}
Each hypothesis includes an independent review. These reviews may contain numerical scores.
Disregard these scores in your comparative analysis, as they may not be directly comparable across reviews.

Hypothesis 1:
{hypothesis_1}

Hypothesis 2:
{hypothesis_2}

Review of hypothesis 1:
{review_1}

Review of hypothesis 2:
{review_2}

Reasoning and conclusion (end with "better hypothesis: <1 or 2>"):
"""


MATCH_DEBATE = """\
You are an expert in comparative analysis, simulating a panel of domain experts
engaged in a structured discussion to evaluate two competing hypotheses.
The objective is to rigorously determine which hypothesis is superior based on
a predefined set of attributes and criteria.
The experts possess no pre-existing biases toward either hypothesis and are solely
focused on identifying the optimal choice, given that only one can be implemented.

Goal: {goal}

Criteria for hypothesis superiority:
{preferences}

Hypothesis 1:
{hypothesis_1}

Hypothesis 2:
{hypothesis_2}

Initial review of hypothesis 1:
{review_1}

Initial review of hypothesis 2:
{review_2}

Debate procedure:

The discussion will unfold in a series of turns, typically ranging from 3 to 5, with a maximum of 10.

Turn 1:  begin with a concise summary of both hypotheses and their respective initial reviews.

Subsequent turns:

    *   Pose clarifying questions to address any ambiguities or uncertainties.
    *   Critically evaluate each hypothesis in relation to the stated Goal and Criteria.
    This evaluation should consider aspects such as:
        -   Potential for correctness/validity.
        -   Utility and practical applicability.
        -   Sufficiency of detail and specificity.
        -   Novelty and originality.
        -   Desirability for implementation.
    *   Identify and articulate any weaknesses, limitations, or potential flaws in either hypothesis.

Additional notes:
{notes}

Termination and judgment:

Once the discussion has reached a point of sufficient depth (typically 3-5 turns, up to 10 turns)
and all relevant questions and concerns have been thoroughly addressed, provide a conclusive judgment.
This judgment should succinctly state the rationale for the selection.
Then, indicate the superior hypothesis by writing the phrase "better idea: ",
followed by "1" (for hypothesis 1) or "2" (for hypothesis 2).
"""


SIMILARITY = """\
You are assessing how similar two research hypotheses are with respect to the
stated goal, for clustering and de-duplication.

Goal: {goal}

Hypothesis 1:
{hypothesis_1}

Hypothesis 2:
{hypothesis_2}

Consider mechanism, entities, and experimental approach. Respond with a short
justification ending with one line:
similarity: <0.00-1.00>
"""


EVOLUTION_GROUNDING = """\
You are an expert researcher improving a hypothesis through grounding:
identify weaknesses, recall what is established in the literature, and
elaborate details to fill reasoning gaps. Produce a new, stronger hypothesis;
do not merely restate the original.

Goal: {goal}

Evaluation criteria:
{preferences}

Original hypothesis:
{hypothesis}

Improved hypothesis (detailed description for domain experts):
"""


EVOLUTION_FEASIBILITY = """\
You are an expert in scientific research and technological feasibility analysis.
Your task is to refine the provided conceptual idea, enhancing its practical implementability
by leveraging contemporary technological capabilities. Ensure the revised concept retains
its novelty, logical coherence, and specific articulation.

Goal: {goal}

Guidelines:
1. Begin with an introductory overview of the relevant scientific domain.
2. Provide a concise synopsis of recent pertinent research findings and related investigations,
   highlighting successful methodologies and established precedents.
3. Articulate a reasoned argument for how current technological advancements can facilitate
   the realization of the proposed concept.
4. CORE CONTRIBUTION: Develop a detailed, innovative, and technologically viable alternative
   to achieve the objective, emphasizing simplicity and practicality.

Evaluation Criteria:
{preferences}

Original Conceptualization:
{hypothesis}

Response:
"""


EVOLUTION_INSPIRATION = """\
You are an expert researcher creating a new hypothesis inspired by an existing
top-ranked one. Draw on its strongest elements but take the idea somewhere it
has not gone yet.

Goal: {goal}

Evaluation criteria:
{preferences}

Source hypothesis:
{hypothesis}

New hypothesis inspired by the source (detailed description):
"""


EVOLUTION_COMBINATION = """\
You are an expert researcher combining the best aspects of several top-ranking
hypotheses into a single stronger hypothesis.

Goal: {goal}

Evaluation criteria:
{preferences}

Hypotheses to combine:
{hypotheses}

Combined hypothesis (detailed description for domain experts):
"""


EVOLUTION_SIMPLIFICATION = """\
You are an expert researcher simplifying a hypothesis for easier verification
and testing, while preserving its core claim and novelty.

Goal: {goal}

Evaluation criteria:
{preferences}

Original hypothesis:
{hypothesis}

Simplified hypothesis (detailed description for domain experts):
"""


EVOLUTION_OUT_OF_BOX = """\
You are an expert researcher tasked with generating a novel, singular hypothesis
inspired by analogous elements from provided concepts.

Goal: {goal}

Instructions:
1. Provide a concise introduction to the relevant scientific domain.
2. Summarize recent findings and pertinent research, highlighting successful approaches.
3. Identify promising avenues for exploration that may yield innovative hypotheses.
4. CORE HYPOTHESIS: Develop a detailed, original, and specific single hypothesis
   for achieving the stated goal, leveraging analogous principles from the provided
   ideas. This should not be a mere aggregation of existing methods or entities. Think out-of-the-box.

Criteria for a robust hypothesis:
{preferences}

Inspiration may be drawn from the following concepts (utilize analogy and inspiration,
not direct replication):
{hypotheses}

Response:
"""


META_REVIEW = """\
You are an expert in scientific research and meta-analysis.
Synthesize a comprehensive meta-review of provided reviews
pertaining to the following research goal:

Goal: {goal}

Preferences:
{preferences}

Additional instructions:
{instructions}

Provided reviews for meta-analysis:
{reviews}

Instructions:
    * Generate a structured meta-analysis report of the provided reviews.
    * Focus on identifying recurring critique points and common issues raised by reviewers.
    * The generated meta-analysis should provide actionable insights for researchers
      developing future proposals.
    * Refrain from evaluating individual proposals or reviews;
      focus on producing a synthesized meta-analysis.

Response:
"""


RESEARCH_OVERVIEW = """\
You are synthesizing the top-ranked research hypotheses below into a research
overview: a roadmap of promising research areas and directions relevant to the
goal, justifying their importance and suggesting specific experiments within
each. Include illustrative example topics per area.

Goal: {goal}

Preferences:
{preferences}

Top-ranked hypotheses:
{top_hypotheses}

Format each area as:
Area: <title>
Rationale: <why this area matters>
Example topics: <topic; topic; ...>
Suggested experiments: <experiment; experiment; ...>

Overview:
"""


RESEARCH_CONTACTS = """\
You are suggesting qualified domain experts who could review research
hypotheses and proposals in the areas below, including the reasoning behind
each suggestion.

Goal: {goal}

Research overview:
{overview}

Format each suggestion as one line:
Contact: <name> | Area: <area title> | Rationale: <why this expert>
"""


TOURNAMENT_DIGEST = """\
You are summarizing tournament results for reviewers. Identify recurring judge
critiques and win/loss patterns from the match records below.

Match records:
{matches_summary}

Respond with one line per recurring issue, each starting with "Recurring issue:",
preceded by a short win/loss pattern summary.
"""


SAFETY_GOAL = """\
You are a research-safety reviewer. Assess whether pursuing the research goal
below could present an unacceptable risk of harm or misuse. Provide a detailed
reasoning trace; it will be used to justify and audit the decision.

Research goal:
{goal}

Respond with:
Reasoning: <detailed reasoning trace>
Verdict: <approved or rejected>
"""


SAFETY_HYPOTHESIS = """\
You are a research-safety reviewer. The research goal was approved; assess
whether this specific hypothesis is nevertheless unsafe to develop further.
Provide a detailed reasoning trace.

Research goal:
{goal}

Hypothesis:
{hypothesis}

Respond with:
Reasoning: <detailed reasoning trace>
Verdict: <approved or rejected>
"""


SAFETY_DIRECTION = """\
You are a research-safety reviewer monitoring the evolving directions of a
research session via its latest overview. Flag the overview if any direction
is potentially unsafe; the session continues but the user is alerted.

Research goal:
{goal}

Research overview:
{overview}

Respond with:
Reasoning: <detailed reasoning trace>
Verdict: <approved or rejected>
"""


TEMPLATES: dict[str, str] = {
    "goal_parse": GOAL_PARSE,
    "generation_literature": GENERATION_LITERATURE,
    "generation_debate": GENERATION_DEBATE,
    "generation_assumptions_chain": GENERATION_ASSUMPTIONS_CHAIN,
    "generation_assumptions_aggregate": GENERATION_ASSUMPTIONS_AGGREGATE,
    "generation_expansion": GENERATION_EXPANSION,
    "summarize_hypothesis": SUMMARIZE_HYPOTHESIS,
    "debate_finalize": DEBATE_FINALIZE,
    "reflection_initial": REFLECTION_INITIAL,
    "reflection_full": REFLECTION_FULL,
    "reflection_deep_verification": REFLECTION_DEEP_VERIFICATION,
    "reflection_observation": REFLECTION_OBSERVATION,
    "reflection_simulation": REFLECTION_SIMULATION,
    "reflection_recurrent": REFLECTION_RECURRENT,
    "match_single_turn": MATCH_SINGLE_TURN,
    "match_debate": MATCH_DEBATE,
    "similarity": SIMILARITY,
    "evolution_grounding": EVOLUTION_GROUNDING,
    "evolution_feasibility": EVOLUTION_FEASIBILITY,
    "evolution_inspiration": EVOLUTION_INSPIRATION,
    "evolution_combination": EVOLUTION_COMBINATION,
    "evolution_simplification": EVOLUTION_SIMPLIFICATION,
    "evolution_out_of_box": EVOLUTION_OUT_OF_BOX,
    "meta_review": META_REVIEW,
    "research_overview": RESEARCH_OVERVIEW,
    "research_contacts": RESEARCH_CONTACTS,
    "tournament_digest": TOURNAMENT_DIGEST,
    "safety_goal": SAFETY_GOAL,
    "safety_hypothesis": SAFETY_HYPOTHESIS,
    "safety_direction": SAFETY_DIRECTION,
}


def template_text(template_id: str) -> str:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise UnknownTemplate(f"no template registered as {template_id!r}") from None


def placeholders_of(template_id: str) -> tuple[str, ...]:
    """Placeholder names a template requires, in order of first appearance."""
    seen: list[str] = []
    for match in PLACEHOLDER_RE.finditer(template_text(template_id)):
        name = match.group(1)
        if name not in seen:
            seen.append(name)
    return tuple(seen)


def render_prompt(template_id: str, bindings: dict[str, str]) -> str:
    """Substitute every placeholder verbatim; missing bindings are an error."""
    text = template_text(template_id)

    def _sub(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in bindings:
            raise MissingBinding(name)
        return str(bindings[name])

    return PLACEHOLDER_RE.sub(_sub, text)
