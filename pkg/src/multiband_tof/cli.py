"""Command-line entry point: ``multiband-tof <kind> --scenario file.json ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ScenarioError
from .harness import KINDS, ExperimentSpec, run

HELP = {
    "tof": "ToF error statistics over random multipath scenes",
    "profile": "multipath profiles of a fixed scene",
    "localize": "2D localization error CDF",
    "sweep": "hop-protocol sweep duration CDF",
    "follow": "follow-controller distance RMSE",
    "calibrate": "offset and kappa from a known-distance link",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiband-tof", description="Multi-band time-of-flight experiments.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=HELP[kind])
        p.add_argument("--scenario", help="JSON scenario file")
        p.add_argument("--trials", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=f"out/{kind}", help="output directory")
        p.add_argument("--config-override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted scenario key, value parsed as JSON when possible; repeatable")
        p.add_argument("--workers", type=int, default=1, help="processes for independent trials")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = ExperimentSpec(args.kind, args.scenario, args.trials, args.seed, args.out,
                              args.config_override, args.workers)
        result = run(spec)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    s = result.summary
    keys = [k for k in ("median", "p95", "offset_ns", "kappa") if k in s]
    print(json.dumps({"kind": s["kind"], **{k: s[k] for k in keys}, "passed": s["passed"]}))
    for v in result.violations:
        print(f"bound violated: {v}", file=sys.stderr)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
