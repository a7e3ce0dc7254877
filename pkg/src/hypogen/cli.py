"""Command-line interface: run, resume, export, eval, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import EngineConfig
from .core import ResearchGoal
from .errors import EngineError
from .evalharness import (
    accuracy_by_elo_bucket,
    load_reference,
    load_results,
    plot_bucket_report,
    plot_trend_report,
    results_from_store,
    temporal_bucket_trend,
    write_bucket_report,
    write_trend_report,
)
from .events import EventLogWriter
from .literature import FixtureCorpus
from .orchestrator import Engine, resume_from_log
from .store import compute_stats


def _load_config(path: str | None) -> EngineConfig:
    if path:
        return EngineConfig.from_file(path)
    return EngineConfig()


def _literature_from(config_dir: Path | None, corpus: str | None):
    if corpus:
        return FixtureCorpus(corpus)
    return None


def _session_dir(out: str, session_id: str) -> Path:
    directory = Path(out) / session_id
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = config.override(seed=args.seed)
    goal_text = Path(args.goal_file).read_text().strip()
    session_id = args.session_id or "session"
    directory = _session_dir(args.out, session_id)
    (directory / "config.json").write_text(config.model_dump_json(indent=1))
    (directory / "goal.txt").write_text(goal_text + "\n")
    log = EventLogWriter(directory / "events.jsonl")
    engine = Engine(
        config,
        session_id=session_id,
        literature=_literature_from(None, args.corpus),
        log=log,
    )
    engine.start_session(ResearchGoal(goal_text=goal_text))
    if config.worker_count > 1:
        steps = engine.run_parallel(args.max_steps)
    else:
        steps = engine.run(args.max_steps)
    engine.save_checkpoint(directory / "checkpoints" / f"checkpoint-{engine.store.last_seq:06d}.json")
    stats = compute_stats(engine.store)
    print(f"session {session_id}: phase={engine.store.phase.value} steps={steps}")
    print(
        f"hypotheses={stats.hypotheses_total} active={stats.hypotheses_active} "
        f"matches={stats.matches_played} best_elo={stats.best_elo}"
    )
    log.close()
    return 0


def cmd_resume(args: argparse.Namespace) -> int:
    directory = Path(args.session)
    config = EngineConfig.from_file(directory / "config.json")
    engine = resume_from_log(config, directory / "events.jsonl")
    engine.log = EventLogWriter(directory / "events.jsonl")
    engine.literature = _literature_from(directory, args.corpus)
    if config.worker_count > 1:
        steps = engine.run_parallel(args.max_steps)
    else:
        steps = engine.run(args.max_steps)
    engine.save_checkpoint(
        directory / "checkpoints" / f"checkpoint-{engine.store.last_seq:06d}.json"
    )
    print(
        f"resumed {engine.store.session_id}: phase={engine.store.phase.value} steps={steps}"
    )
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    directory = Path(args.session)
    config = EngineConfig.from_file(directory / "config.json")
    engine = resume_from_log(config, directory / "events.jsonl")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store = engine.store
    ranked = store.hypotheses_by_elo()
    lines = ["rank\tid\telo\torigin\tsummary"]
    for i, h in enumerate(ranked, start=1):
        lines.append(f"{i}\t{h.id}\t{h.elo:.1f}\t{h.origin.value}\t{h.summary}")
    (out / "ranked_hypotheses.tsv").write_text("\n".join(lines) + "\n")
    for overview in store.overviews:
        (out / f"overview-v{overview.version}.txt").write_text(overview.body + "\n")
    stats = compute_stats(store)
    (out / "stats.json").write_text(stats.model_dump_json(indent=1))
    print(f"exported {len(ranked)} ranked hypotheses, {len(store.overviews)} overviews to {out}")
    return 0


def cmd_eval_buckets(args: argparse.Namespace) -> int:
    results = load_results(args.infile)
    reference = load_reference(args.ref) if args.ref else None
    report = accuracy_by_elo_bucket(results, reference)
    paths = write_bucket_report(report, args.out)
    if args.plot:
        paths["plot"] = plot_bucket_report(report, Path(args.out) / "elo_buckets.png")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_eval_trend(args: argparse.Namespace) -> int:
    if args.infile:
        results = load_results(args.infile)
    else:
        directory = Path(args.session)
        config = EngineConfig.from_file(directory / "config.json")
        engine = resume_from_log(config, directory / "events.jsonl")
        results = results_from_store(engine.store, include_unmatched=True)
    rows = temporal_bucket_trend(results)
    paths = write_trend_report(rows, args.out)
    if args.plot:
        paths["plot"] = plot_trend_report(rows, Path(args.out) / "temporal_trend.png")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import EngineManager, create_app

    config = _load_config(args.config)
    manager = EngineManager(config, literature=_literature_from(None, args.corpus))
    app = create_app(manager)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypogen", description="research hypothesis engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="start and drive a session to a terminal state")
    run.add_argument("--goal-file", required=True)
    run.add_argument("--config", default=None)
    run.add_argument("--out", default="sessions")
    run.add_argument("--session-id", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--max-steps", type=int, default=None)
    run.add_argument("--corpus", default=None, help="fixture corpus directory")
    run.set_defaults(func=cmd_run)

    resume = sub.add_parser("resume", help="resume a session from its event log")
    resume.add_argument("--session", required=True, help="session directory")
    resume.add_argument("--max-steps", type=int, default=None)
    resume.add_argument("--corpus", default=None)
    resume.set_defaults(func=cmd_resume)

    export = sub.add_parser("export", help="export rankings and overviews")
    export.add_argument("--session", required=True)
    export.add_argument("--out", required=True)
    export.set_defaults(func=cmd_export)

    evalp = sub.add_parser("eval", help="evaluation harness")
    evalsub = evalp.add_subparsers(dest="eval_command", required=True)

    buckets = evalsub.add_parser("buckets", help="rating-bucket accuracy report")
    buckets.add_argument("--in", dest="infile", required=True)
    buckets.add_argument("--ref", default=None)
    buckets.add_argument("--out", required=True)
    buckets.add_argument("--plot", action="store_true")
    buckets.set_defaults(func=cmd_eval_buckets)

    trend = evalsub.add_parser("trend", help="temporal compute-scaling trend")
    group = trend.add_mutually_exclusive_group(required=True)
    group.add_argument("--session", default=None)
    group.add_argument("--in", dest="infile", default=None)
    trend.add_argument("--out", required=True)
    trend.add_argument("--plot", action="store_true")
    trend.set_defaults(func=cmd_eval_trend)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8800)
    serve.add_argument("--config", default=None)
    serve.add_argument("--corpus", default=None)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
