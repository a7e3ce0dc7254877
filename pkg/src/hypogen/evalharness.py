"""Evaluation harness: rating-bucket accuracy concordance and temporal
compute-scaling trends, over engine runs or externally produced result files.

The headline benchmark numbers from frontier-model runs are not
reproducible at desk scale; this harness accepts any JSONL result file so a
user with model access can rerun them, while CI exercises the methodology
with synthetic generators.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

from pydantic import BaseModel, ConfigDict

from .core import elo_bucket_of
from .errors import EmptyInput, SessionTerminal, TooFewResults
from .store import SessionStore

TEMPORAL_BUCKETS = 10


class LabeledResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    question_id: str
    result_text: str = ""
    elo: float
    correct: bool = False
    created_seq: int = 0


class BucketRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    midpoint: float
    n: int
    accuracy: float
    reference_accuracy: Optional[float] = None


class BucketReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: tuple[BucketRow, ...]


class TemporalBucketRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    bucket: int
    n: int
    best_elo: float
    top10_mean_elo: float


def accuracy_by_elo_bucket(
    results: Sequence[LabeledResult],
    reference: Optional[dict[str, float]] = None,
) -> BucketReport:
    """Group results into 50-point rating buckets and average correctness.

    The optional reference maps question_id to a baseline accuracy; each
    bucket's reference is the mean over the distinct questions it contains.
    """
    if not results:
        raise EmptyInput("no results to bucket")
    grouped: dict[str, list[LabeledResult]] = {}
    bounds: dict[str, tuple[float, float]] = {}
    for result in results:
        bucket = elo_bucket_of(result.elo)
        grouped.setdefault(bucket.label, []).append(result)
        bounds[bucket.label] = (bucket.lower, bucket.upper)
    rows = []
    for label in sorted(grouped, key=lambda lab: bounds[lab][1]):
        members = grouped[label]
        accuracy = sum(1 for r in members if r.correct) / len(members)
        ref: Optional[float] = None
        if reference:
            questions = sorted({r.question_id for r in members})
            known = [reference[q] for q in questions if q in reference]
            ref = sum(known) / len(known) if known else None
        lower, upper = bounds[label]
        midpoint = upper - 25.0 if lower != float("-inf") else upper
        rows.append(
            BucketRow(
                label=label,
                midpoint=midpoint,
                n=len(members),
                accuracy=accuracy,
                reference_accuracy=ref,
            )
        )
    return BucketReport(rows=tuple(rows))


def temporal_bucket_trend(results: Sequence[LabeledResult]) -> list[TemporalBucketRow]:
    """Split results into ten contiguous creation-order buckets.

    Each bucket reports its best rating and the mean of its top ten (all of
    them when fewer). Remainders pad the earliest buckets so sizes differ by
    at most one.
    """
    ordered = sorted(results, key=lambda r: r.created_seq)
    if len(ordered) < TEMPORAL_BUCKETS:
        raise TooFewResults(
            f"need at least {TEMPORAL_BUCKETS} results, have {len(ordered)}"
        )
    base, remainder = divmod(len(ordered), TEMPORAL_BUCKETS)
    rows = []
    cursor = 0
    for index in range(TEMPORAL_BUCKETS):
        size = base + (1 if index < remainder else 0)
        members = ordered[cursor : cursor + size]
        cursor += size
        elos = sorted((r.elo for r in members), reverse=True)
        top = elos[:10]
        rows.append(
            TemporalBucketRow(
                bucket=index + 1,
                n=len(members),
                best_elo=elos[0],
                top10_mean_elo=sum(top) / len(top),
            )
        )
    return rows


def top1_selection(results: Sequence[LabeledResult]) -> dict[str, LabeledResult]:
    """Per question, the highest-rated result; ties go to the earliest."""
    best: dict[str, LabeledResult] = {}
    for result in sorted(results, key=lambda r: (r.question_id, -r.elo, r.created_seq)):
        best.setdefault(result.question_id, result)
    return best


def inject_external_candidates(engine, candidates: Sequence[str], tag: str) -> list[str]:
    """Enter external candidate texts into a running session's tournament.

    Each candidate becomes an expert-contributed hypothesis carrying the
    provenance tag and competes under identical rules.
    """
    if engine.store.is_terminal():
        raise SessionTerminal("cannot inject candidates into a terminal session")
    ids = []
    for text in candidates:
        hypothesis = engine.contribute_hypothesis(text, provenance_tag=tag)
        ids.append(hypothesis.id)
    return ids


def elo_summary_by_tag(store: SessionStore) -> dict[str, dict[str, float]]:
    """Mean/best rating per provenance tag (untagged grouped as "engine")."""
    groups: dict[str, list[float]] = {}
    for hypothesis in store.hypotheses.values():
        tag = store.provenance_tags.get(hypothesis.id, "") or "engine"
        groups.setdefault(tag, []).append(hypothesis.elo)
    return {
        tag: {
            "n": float(len(elos)),
            "mean_elo": sum(elos) / len(elos),
            "best_elo": max(elos),
        }
        for tag, elos in sorted(groups.items())
    }


def results_from_store(
    store: SessionStore, *, question_id: str = "", include_unmatched: bool = False
) -> list[LabeledResult]:
    """Adapt a session's tournament hypotheses into labeled results."""
    question = question_id or store.session_id
    played = store.matches_played_map()
    results = []
    for hypothesis in sorted(store.hypotheses.values(), key=lambda h: h.created_seq):
        if hypothesis.state.value in ("draft", "rejected_initial", "excluded_unsafe"):
            continue
        if not include_unmatched and played.get(hypothesis.id, 0) == 0:
            continue
        results.append(
            LabeledResult(
                question_id=question,
                result_text=hypothesis.summary or hypothesis.content[:200],
                elo=hypothesis.elo,
                correct=True,
                created_seq=hypothesis.created_seq,
            )
        )
    return results


def load_results(path: str | Path) -> list[LabeledResult]:
    """Read one LabeledResult per JSONL line."""
    results = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            results.append(LabeledResult(**json.loads(line)))
    if not results:
        raise EmptyInput(f"no results in {path}")
    return results


def load_reference(path: str | Path) -> dict[str, float]:
    """Read {question_id, accuracy} JSONL baseline accuracies."""
    reference = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            record = json.loads(line)
            reference[record["question_id"]] = float(record["accuracy"])
    return reference


def write_bucket_report(report: BucketReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "elo_buckets.tsv"
    lines = ["label\tmidpoint\tn\taccuracy\treference_accuracy"]
    for row in report.rows:
        ref = "" if row.reference_accuracy is None else f"{row.reference_accuracy:.4f}"
        lines.append(f"{row.label}\t{row.midpoint:.1f}\t{row.n}\t{row.accuracy:.4f}\t{ref}")
    table.write_text("\n".join(lines) + "\n")
    summary = out / "elo_buckets_summary.json"
    summary.write_text(
        json.dumps({"rows": [r.model_dump(mode="json") for r in report.rows]}, indent=1)
    )
    return {"table": table, "summary": summary}


def write_trend_report(rows: list[TemporalBucketRow], out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "temporal_trend.tsv"
    lines = ["bucket\tn\tbest_elo\ttop10_mean_elo"]
    for row in rows:
        lines.append(f"{row.bucket}\t{row.n}\t{row.best_elo:.2f}\t{row.top10_mean_elo:.2f}")
    table.write_text("\n".join(lines) + "\n")
    summary = out / "temporal_trend_summary.json"
    summary.write_text(
        json.dumps({"rows": [r.model_dump(mode="json") for r in rows]}, indent=1)
    )
    return {"table": table, "summary": summary}


def plot_bucket_report(report: BucketReport, out_path: str | Path) -> Path:
    """Static chart of bucket accuracy vs rating; needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [row.midpoint for row in report.rows]
    ys = [row.accuracy for row in report.rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, ys, marker="o", label="engine accuracy")
    refs = [(r.midpoint, r.reference_accuracy) for r in report.rows if r.reference_accuracy is not None]
    if refs:
        ax.plot([x for x, _ in refs], [y for _, y in refs], marker="s", linestyle="--", label="reference")
    ax.set_xlabel("rating bucket midpoint")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_trend_report(rows: list[TemporalBucketRow], out_path: str | Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [row.bucket for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, [row.best_elo for row in rows], marker="o", label="best rating")
    ax.plot(xs, [row.top10_mean_elo for row in rows], marker="s", label="top-10 mean")
    ax.set_xlabel("temporal bucket")
    ax.set_ylabel("rating")
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
