"""Command-line entry point ``mcpt``.

Exit codes: 0 success, 1 input or configuration error, 2 internal invariant
violation, 3 ``eval`` result below ``--floor``. Log verbosity comes from
``MCPT_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .errors import InvariantViolation, McptError
from .io import load_tracks
from .metrics import evaluate
from .pipeline import STAGES, run_pipeline
from .render import render_topdown
from .synthgen import Scenario, generate, parse_scenario, write_scene

LOG_ENV = "MCPT_LOG_LEVEL"
EXIT_BELOW_FLOOR = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcpt", description="Multi-camera people tracking pipeline.")
    p.add_argument("--config", type=Path, help="run configuration (key = value)")
    p.add_argument("--scene", type=Path, help="scene directory")
    p.add_argument("--out", type=Path, help="output directory or file")
    p.add_argument("--seed", type=int, help="override the rng seed")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scene")
    g.add_argument("--scenario", type=Path, help="scenario file; defaults apply when omitted")

    sub.add_parser("calibrate", help="estimate per-camera homographies")
    sub.add_parser("track", help="single-camera tracking")
    sub.add_parser("assign", help="anchor clustering and global id assignment")
    sub.add_parser("stcra", help="spatio-temporal id re-assignment")

    pl = sub.add_parser("pipeline", help="run several stages in order")
    pl.add_argument("--stages", default=",".join(STAGES), help="comma-separated subset of " + ",".join(STAGES))

    e = sub.add_parser("eval", help="identity metrics of predicted against ground-truth tracks")
    e.add_argument("--pred", type=Path, required=True)
    e.add_argument("--gt", type=Path, required=True)
    e.add_argument("--match", choices=("iou", "world"), default="iou")
    e.add_argument("--iou-thresh", type=float, default=0.5)
    e.add_argument("--radius", type=float, default=1.0)
    e.add_argument("--format", choices=("table", "csv"), default="table")
    e.add_argument("--floor", type=float, help="exit with status 3 when idf1 is below this value")

    r = sub.add_parser("render", help="top-down SVG of a tracks file")
    r.add_argument("--tracks", type=Path, required=True)
    r.add_argument("--map-size", type=float, nargs=2, metavar=("W", "H"), required=True)
    return p


def _need(value, flag: str):
    if value is None:
        raise McptError(f"{flag} is required for this command")
    return value


def _run(args) -> int:
    cmd = args.command
    if cmd == "generate":
        scene_dir = _need(args.scene or args.out, "--scene")
        if args.scenario is not None:
            if not args.scenario.exists():
                raise McptError(f"scenario file not found: {args.scenario}")
            scenario = parse_scenario(args.scenario.read_text(), str(args.scenario))
        else:
            scenario = Scenario()
        if args.seed is not None:
            scenario = scenario.replace(rng_seed=args.seed)
        paths = write_scene(generate(scenario), scene_dir)
        print(f"wrote {len(paths)} files to {scene_dir}")
        return 0
    if cmd in ("calibrate", "track", "assign", "stcra", "pipeline"):
        stages = {
            "calibrate": ["calibrate"],
            "track": ["sct"],
            "assign": ["anchors"],
            "stcra": ["stcra"],
        }.get(cmd)
        if stages is None:
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        scene = _need(args.scene, "--scene")
        run = run_pipeline(scene, args.config, stages, out_dir=args.out, seed=args.seed)
        for name, digest in sorted(run.manifest.items()):
            print(f"{digest}  {name}")
        return 0
    if cmd == "eval":
        report = evaluate(load_tracks(args.pred), load_tracks(args.gt), args.match, args.iou_thresh, args.radius)
        text = report.to_csv() if args.format == "csv" else report.to_table() + "\n"
        if args.out is not None:
            args.out.write_text(text)
        sys.stdout.write(text)
        if args.floor is not None and report.idf1 < args.floor:
            print(f"idf1 {report.idf1!r} below floor {args.floor!r}", file=sys.stderr)
            return EXIT_BELOW_FLOOR
        return 0
    if cmd == "render":
        out = _need(args.out, "--out")
        render_topdown(args.tracks, tuple(args.map_size), out)
        print(f"wrote {out}")
        return 0
    raise InvariantViolation(f"unhandled command {cmd}")


def main(argv: Optional[List[str]] = None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except (McptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
