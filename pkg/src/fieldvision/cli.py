"""Command-line entry point.

Exit codes: 0 success, 1 data problem (bad input content, rejected
geometry), 2 usage problem (bad arguments, missing files).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import load_config
from .errors import FieldVisionError, UsageError
from .stats import BALL_ENTITY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldvision",
        description="Fixed-camera robot soccer video analytics.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="pipeline config YAML")
        return p

    add("calibrate", "estimate camera intrinsics from planar views")
    add("bgsub", "run background subtraction over a frame directory")
    add("homography", "fit the image-to-plan homography from landmarks")

    track = add("track", "track detections and derive events")
    track.add_argument("--no-gc", action="store_true",
                       help="skip controller-log identity association")

    stats = add("stats", "render statistics from a completed track run")
    stats.add_argument("--entity", default=BALL_ENTITY,
                       help="heatmap subject: 'ball' or a track id")
    stats.add_argument("--heatmap-only", action="store_true",
                       help="skip trackmap and pass/shot overlays")

    serve = add("serve", "serve frames, stats and calibration endpoints")
    serve.add_argument("--port", type=int, default=None,
                       help="override the configured port")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "calibrate":
            from .pipeline import run_calibrate
            run_calibrate(cfg)
        elif args.command == "bgsub":
            from .pipeline import run_bgsub
            run_bgsub(cfg)
        elif args.command == "homography":
            from .pipeline import run_homography
            run_homography(cfg)
        elif args.command == "track":
            from .pipeline import run_track
            run_track(cfg, use_gc=not args.no_gc)
        elif args.command == "stats":
            from .pipeline import run_stats
            entity = args.entity
            if entity != BALL_ENTITY:
                try:
                    entity = int(entity)
                except ValueError:
                    raise UsageError(
                        f"--entity must be {BALL_ENTITY!r} or a track id, "
                        f"got {entity!r}") from None
            run_stats(cfg, entity=entity, heatmap_only=args.heatmap_only)
        elif args.command == "serve":
            from .service import serve
            serve(cfg, port=args.port)
    except UsageError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except FieldVisionError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
