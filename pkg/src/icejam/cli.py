"""Command-line entry point.

    icejam <features|select|fit|bootstrap|project|report> --config run.yaml
           [--seed N] [--stages a,b,...] [--out DIR] [--workers N]

Each subcommand runs its own stage, reading earlier results from ``--out``;
``report`` runs the whole pipeline unless ``--stages`` says otherwise.
On failure one JSON line ``{"error": {...}}`` goes to stderr and the exit
code is non-zero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .pipeline import STAGES, StageError, load_config, run_pipeline

EXIT_STAGE = 1
EXIT_USAGE = 2


def _stages(text: str) -> list[str]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in items if s not in STAGES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown stage(s): {', '.join(bad)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icejam", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "report" else
                           "run the full pipeline and write the report")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
        p.add_argument("--stages", type=_stages, default=None,
                       help="comma-separated stage list overriding the default")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--workers", type=int, default=None, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _error(kind: str, message: str, stage: str | None = None) -> None:
    payload = {"type": kind, "message": message}
    if stage is not None:
        payload["stage"] = stage
    print(json.dumps({"error": payload}, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, workers=args.workers)
    except Exception as exc:
        _error(type(exc).__name__, str(exc), "config")
        return EXIT_USAGE
    if args.stages is not None:
        stages = args.stages
    elif args.command == "report":
        stages = list(STAGES)
    else:
        stages = [args.command]
    try:
        result = run_pipeline(cfg, stages, args.out)
    except StageError as exc:
        _error(type(exc.cause).__name__ if isinstance(exc.cause, Exception) else "StageError",
               str(exc.cause), exc.stage)
        return EXIT_STAGE
    except ValueError as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_USAGE
    print(json.dumps({"out": result["out"], "stages": result["stages"],
                      "config_sha256": result["manifest"]["config_sha256"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
