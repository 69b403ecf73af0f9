"""``forge`` command-line entry point.

Exit codes: 0 success (possibly with per-element failures), 1 usage error,
2 fatal pipeline error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, PipelineConfig, load_config
from .errors import ForgeError
from .ingest import load_collection
from .layers import StockCatalog
from .manifest import emit
from .pipeline import (
    EventState,
    PipelineFailure,
    RunLog,
    analyze_photos,
    compose_event,
    generate_elements,
    load_terrain,
    make_store,
    place_elements,
    run_pipeline,
)
from .report import feasibility_report, load_logs

EXIT_OK, EXIT_USAGE, EXIT_FATAL = 0, 1, 2

log = logging.getLogger("diorama_forge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, needs_input: bool = True) -> None:
    if needs_input:
        p.add_argument("--input", required=True, type=Path, help="directory of event photos")
    p.add_argument("--out", required=True, type=Path, help="output root; the event goes to <out>/<event_id>/")
    p.add_argument("--mode", choices=("live", "record", "replay"))
    p.add_argument("--fixtures", type=Path, help="fixture store directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--max-parallel", type=int, dest="max_parallel_requests")
    p.add_argument("--event-id", dest="event_id")
    p.add_argument("--runs", type=Path, default=Path("runs"), help="where stage logs are written (default: runs/)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forge", description="Build 3D memory dioramas from event photos.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    _common(sub.add_parser("run", help="run every phase and emit the scene"))
    _common(sub.add_parser("analyze", help="photo analysis only"))
    _common(sub.add_parser("place", help="element generation and placement on an analyzed event"))
    p = sub.add_parser("compose", help="compose scene.json from an event's intermediate files")
    _common(p, needs_input=False)
    p.add_argument("--event", required=True, help="event id under --out")

    p = sub.add_parser("report", help="feasibility table over saved stage logs")
    p.add_argument("--runs", required=True, type=Path, help="directory (or file) of stage logs")
    p.add_argument("--format", choices=("text", "json"), default="text")
    return parser


def _config(args) -> PipelineConfig:
    return load_config(
        args.config,
        mode=args.mode,
        fixtures_dir=args.fixtures,
        seed=args.seed,
        max_parallel_requests=args.max_parallel_requests,
        event_id=args.event_id,
    )


def _save_log(run_log: RunLog, runs_dir: Path) -> None:
    path = run_log.save(runs_dir)
    log.info("stage log written to %s", path)


def _cmd_run(args, config: PipelineConfig) -> int:
    result = run_pipeline(args.input, args.out, config, runs_dir=args.runs)
    failed = sum(1 for s in result.log.stages for i in s.items if i.outcome == "failed")
    print(f"{result.manifest.event_id}: wrote {result.event_dir} ({failed} element failure(s))")
    return EXIT_OK


def _cmd_analyze(args, config: PipelineConfig) -> int:
    store = make_store(config)
    collection = load_collection(args.input, config.event_id, config.max_parallel_requests)
    state, stage = analyze_photos(collection, store, config)
    run_log = RunLog(collection.event_id, config.seed, config.mode, [stage])
    _save_log(run_log, args.runs)
    if state.scene is None:
        raise PipelineFailure(f"{collection.event_id}: photo analysis produced no valid scene description")
    event_dir = args.out / collection.event_id
    state.write(event_dir)
    print(f"{collection.event_id}: analysis written to {event_dir}")
    return EXIT_OK


def _cmd_place(args, config: PipelineConfig) -> int:
    store = make_store(config)
    collection = load_collection(args.input, config.event_id, config.max_parallel_requests)
    event_dir = args.out / collection.event_id
    state = EventState.load(event_dir)
    run_log = RunLog(collection.event_id, config.seed, config.mode)
    run_log.stages.append(generate_elements(state, collection, store, config))
    run_log.stages.append(place_elements(state, store, config, load_terrain(config), StockCatalog.load()))
    _save_log(run_log, args.runs)
    state.write(event_dir)
    print(f"{collection.event_id}: {len(state.generated)} generated, {len(state.placements)} placed")
    return EXIT_OK


def _cmd_compose(args, config: PipelineConfig) -> int:
    event_dir = args.out / args.event
    state = EventState.load(event_dir)
    manifest = compose_event(state, config, load_terrain(config), StockCatalog.load())
    emit(manifest, args.out, state.to_files())
    print(f"{manifest.event_id}: wrote {event_dir / 'scene.json'}")
    return EXIT_OK


def _cmd_report(args) -> int:
    logs = load_logs(args.runs)
    if not logs:
        raise UsageError(f"no stage logs found under {args.runs}")
    report = feasibility_report(logs)
    sys.stdout.write(report.to_json() if args.format == "json" else report.to_text())
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            return _cmd_report(args)
        config = _config(args)
        handler = {"run": _cmd_run, "analyze": _cmd_analyze, "place": _cmd_place, "compose": _cmd_compose}
        return handler[args.command](args, config)
    except (UsageError, ConfigError) as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ForgeError, OSError, ValueError) as exc:
        print(f"forge: fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
