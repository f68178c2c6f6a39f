"""Command-line entry point.

Exit codes: 0 success, 2 when any sweep point was infeasible (reported
per-row in the CSV status column), 1 on error.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from . import harness


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cibeam",
        description="Constructive-interference precoding experiments for "
                    "radar/cellular spectrum sharing.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in (*harness.MODES, "bench"):
        p = sub.add_parser(mode)
        p.add_argument("--config", default=None,
                       help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed override")
        p.add_argument("--out", default=None,
                       help="CSV output path (summary JSON written beside)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for sweep points")
        p.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE",
                       help="override a config leaf via dotted path, e.g. "
                            "--set dims.n=12 --set sweep.gamma_db=[10,20]")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = harness.ExperimentConfig.load(
            path=args.config, overrides=args.overrides, seed=args.seed,
            out=args.out, threads=args.threads,
            mode=args.mode if args.mode != "bench" else None)
        if args.mode == "bench":
            result = harness.bench(cfg)
        else:
            result = harness.run(cfg)
        if not cfg.get("out"):
            sys.stdout.write(harness.format_csv(result))
        return result.exit_code
    except BrokenPipeError:
        return 0
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
