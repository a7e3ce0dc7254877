"""Tournament ranking: Elo math, match scheduling, judged matches, proximity.

Matches are judged by a model prompt; top-ranked pairs get a multi-turn
debate, everyone else a single-turn comparison. The proximity graph feeds
both match scheduling (similar hypotheses meet more often) and
de-duplication.
"""

from __future__ import annotations

import math
import random
import re
from typing import Callable, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

from ..core import (
    Hypothesis,
    MatchMode,
    MatchWinner,
    TournamentMatch,
)
from ..errors import (
    InsufficientPopulation,
    NonFiniteRating,
    VerdictUnparseable,
)
from ..gateway import AgentKind, Backend, ModelRequest, parse_match_verdict

MAX_MATCH_DEBATE_TURNS = 10


class EloParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_factor: float = 32.0
    initial_rating: float = 1200.0
    scale: float = 400.0
    base: float = 10.0
    top_rank_debate_threshold: int = 10


class ProximityGraph(BaseModel):
    """Symmetric similarity graph over hypothesis ids, weights in [0,1]."""

    model_config = ConfigDict(frozen=True)

    edges: dict[str, float] = Field(default_factory=dict)

    @staticmethod
    def edge_key(a: str, b: str) -> str:
        lo, hi = sorted((a, b))
        return f"{lo}|{hi}"

    def similarity(self, a: str, b: str, default: float = 0.0) -> float:
        if a == b:
            return 1.0
        return self.edges.get(self.edge_key(a, b), default)

    def with_edge(self, a: str, b: str, value: float) -> "ProximityGraph":
        if a == b:
            return self
        if not 0.0 <= value <= 1.0:
            raise ValueError("similarity must be in [0,1]")
        edges = dict(self.edges)
        edges[self.edge_key(a, b)] = value
        return ProximityGraph(edges=edges)

    def missing_pairs(self, ids: Sequence[str]) -> list[tuple[str, str]]:
        out = []
        ordered = sorted(ids)
        for i, a in enumerate(ordered):
            for b in ordered[i + 1 :]:
                if self.edge_key(a, b) not in self.edges:
                    out.append((a, b))
        return out


class ScheduledPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: str
    b: str
    mode: MatchMode
    reason: str = ""


class MatchSchedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    pairs: tuple[ScheduledPair, ...] = ()


def expected_score(r_a: float, r_b: float, params: EloParams) -> float:
    """Probability the first rating beats the second."""
    if not (math.isfinite(r_a) and math.isfinite(r_b)):
        raise NonFiniteRating("ratings must be finite")
    return 1.0 / (1.0 + params.base ** ((r_b - r_a) / params.scale))


def apply_elo_update(
    r_a: float, r_b: float, winner: MatchWinner, params: EloParams
) -> tuple[float, float]:
    """Zero-sum rating update for a decided match (no draws)."""
    e_a = expected_score(r_a, r_b, params)
    s_a = 1.0 if winner == MatchWinner.A else 0.0
    delta = params.k_factor * (s_a - e_a)
    return r_a + delta, r_b - delta


def _recency_boost(matches_played: int) -> float:
    return 1.0 / (1.0 + matches_played)


def schedule_matches(
    active: Sequence[Hypothesis],
    graph: ProximityGraph,
    params: EloParams,
    rng: random.Random,
    batch_size: int = 1,
    *,
    matches_played: Optional[dict[str, int]] = None,
    excluded: frozenset[str] = frozenset(),
) -> MatchSchedule:
    """Sample match pairs, weighting similarity, recency, and rank.

    Pair weight = (1 + similarity) * (1 + recency_a + recency_b) *
    (1 + rank_a + rank_b); recency decays with matches already played and
    rank boosts members of the configured top tier. Hypotheses are not
    reused within one batch so a batch can run concurrently.
    """
    matches_played = matches_played or {}
    pool = [h for h in active if h.id not in excluded]
    if len(pool) < 2:
        raise InsufficientPopulation("need at least two active hypotheses")
    ranked = sorted(pool, key=lambda h: (-h.elo, h.created_seq))
    rank_of = {h.id: i + 1 for i, h in enumerate(ranked)}
    top = {h.id for h in ranked[: params.top_rank_debate_threshold]}

    def boost(h: Hypothesis) -> tuple[float, float]:
        recency = _recency_boost(matches_played.get(h.id, 0))
        rank = 1.0 if h.id in top else 0.0
        return recency, rank

    pairs: list[ScheduledPair] = []
    used: set[str] = set()
    for _ in range(batch_size):
        candidates: list[tuple[float, Hypothesis, Hypothesis]] = []
        ordered = sorted(
            (h for h in pool if h.id not in used), key=lambda h: h.created_seq
        )
        for i, ha in enumerate(ordered):
            for hb in ordered[i + 1 :]:
                sim = graph.similarity(ha.id, hb.id)
                rec_a, rank_a = boost(ha)
                rec_b, rank_b = boost(hb)
                weight = (1.0 + sim) * (1.0 + rec_a + rec_b) * (1.0 + rank_a + rank_b)
                candidates.append((weight, ha, hb))
        if not candidates:
            break
        total = sum(w for w, _, _ in candidates)
        point = rng.random() * total
        acc = 0.0
        chosen = candidates[-1]
        for cand in candidates:
            acc += cand[0]
            if point <= acc:
                chosen = cand
                break
        _, ha, hb = chosen
        mode = (
            MatchMode.MULTI_TURN_DEBATE
            if ha.id in top and hb.id in top
            else MatchMode.SINGLE_TURN
        )
        sim = graph.similarity(ha.id, hb.id)
        pairs.append(
            ScheduledPair(
                a=ha.id,
                b=hb.id,
                mode=mode,
                reason=f"similarity={sim:.2f} rank_a={rank_of[ha.id]} rank_b={rank_of[hb.id]}",
            )
        )
        used.update((ha.id, hb.id))
    return MatchSchedule(pairs=tuple(pairs))


def run_match(
    match_id: str,
    pair: ScheduledPair,
    hyp_a: Hypothesis,
    hyp_b: Hypothesis,
    gateway: Backend,
    params: EloParams,
    *,
    goal: str,
    preferences: str,
    idea_attributes: str,
    review_a: str,
    review_b: str,
    notes: str = "",
) -> tuple[TournamentMatch, int]:
    """Judge one pair and compute the Elo consequences.

    Returns the completed match and the number of model calls spent.
    Verdict parse failures get one re-prompt; a second failure raises
    VerdictUnparseable and no ratings change.
    """
    calls = 0
    transcript = ""
    winner: Optional[str] = None

    if pair.mode == MatchMode.SINGLE_TURN:
        for attempt in range(2):
            request = ModelRequest(
                agent_kind=AgentKind.RANKING,
                template_id="match_single_turn",
                bindings={
                    "idea_attributes": idea_attributes,
                    "goal": goal,
                    "preferences": preferences,
                    "notes": notes if attempt == 0 else notes + "\nRe-prompt: state the final verdict line now.",
                    "hypothesis_1": hyp_a.content,
                    "hypothesis_2": hyp_b.content,
                    "review_1": review_a,
                    "review_2": review_b,
                },
                trace_id=match_id,
            )
            response = gateway.complete(request)
            calls += 1
            transcript += ("\n" if transcript else "") + response.text
            winner = parse_match_verdict(response.text)
            if winner is not None:
                break
    else:
        turn = 0
        while turn < MAX_MATCH_DEBATE_TURNS:
            turn += 1
            turn_notes = notes + (
                f"\n\nDebate transcript so far:\n{transcript}" if transcript else ""
            )
            request = ModelRequest(
                agent_kind=AgentKind.RANKING,
                template_id="match_debate",
                bindings={
                    "goal": goal,
                    "preferences": preferences,
                    "notes": turn_notes,
                    "hypothesis_1": hyp_a.content,
                    "hypothesis_2": hyp_b.content,
                    "review_1": review_a,
                    "review_2": review_b,
                },
                max_turns_hint=MAX_MATCH_DEBATE_TURNS,
                trace_id=match_id,
            )
            response = gateway.complete(request)
            calls += 1
            transcript += ("\n" if transcript else "") + f"Turn {turn}:\n{response.text}"
            winner = parse_match_verdict(transcript)
            if winner is not None:
                break

    if winner is None:
        raise VerdictUnparseable(f"judge produced no verdict for match {match_id}")

    result = MatchWinner.A if winner == "a" else MatchWinner.B
    elo_before = (hyp_a.elo, hyp_b.elo)
    elo_after = apply_elo_update(hyp_a.elo, hyp_b.elo, result, params)
    match = TournamentMatch(
        id=match_id,
        hypothesis_a=hyp_a.id,
        hypothesis_b=hyp_b.id,
        mode=pair.mode,
        transcript=transcript,
        winner=result,
        elo_before=elo_before,
        elo_after=elo_after,
        scheduled_reason=pair.reason,
    )
    return match, calls


_SIMILARITY_LINE_RE = re.compile(r"similarity\s*:\s*([01](?:\.\d+)?)", re.IGNORECASE)


def compute_similarity(
    hyp_a: Hypothesis,
    hyp_b: Hypothesis,
    gateway: Backend,
    *,
    goal: str = "",
    trace_id: str = "",
) -> tuple[float, int]:
    """Model-judged similarity in [0,1]; identical content short-circuits to 1."""
    if hyp_a.content == hyp_b.content:
        return 1.0, 0
    request = ModelRequest(
        agent_kind=AgentKind.PROXIMITY,
        template_id="similarity",
        bindings={
            "goal": goal,
            "hypothesis_1": hyp_a.content,
            "hypothesis_2": hyp_b.content,
        },
        trace_id=trace_id,
    )
    response = gateway.complete(request)
    last = None
    for match in _SIMILARITY_LINE_RE.finditer(response.text):
        last = match
    value = float(last.group(1)) if last else 0.0
    return max(0.0, min(1.0, value)), 1


def jaccard_similarity(hyp_a: Hypothesis, hyp_b: Hypothesis) -> float:
    """Local embedding-free fallback metric: token Jaccard."""
    ta = set(re.findall(r"[a-z0-9]+", hyp_a.content.lower()))
    tb = set(re.findall(r"[a-z0-9]+", hyp_b.content.lower()))
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def dedup_clusters(graph: ProximityGraph, threshold: float) -> list[set[str]]:
    """Connected components of the subgraph with similarity >= threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for key, sim in graph.edges.items():
        a, b = key.split("|", 1)
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        if sim >= threshold:
            union(a, b)
    clusters: dict[str, set[str]] = {}
    for node in parent:
        clusters.setdefault(find(node), set()).add(node)
    return sorted(clusters.values(), key=lambda c: min(c))


def duplicate_ids(
    clusters: list[set[str]], elo_of: Callable[[str], Optional[float]]
) -> list[str]:
    """Within each cluster, every member except the highest-rated one."""
    doomed: list[str] = []
    for cluster in clusters:
        rated = [(elo_of(h), h) for h in cluster]
        rated = [(e, h) for e, h in rated if e is not None]
        if len(rated) < 2:
            continue
        rated.sort(key=lambda pair: (-pair[0], pair[1]))
        doomed.extend(h for _, h in rated[1:])
    return doomed
