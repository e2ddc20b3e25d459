"""Command-line front end.

    asyncact run --spec FILE [--scale S] [--trials N] [--seed X] [--workers W] [--out DIR]
    asyncact preset NAME [--scale S] [--trials N] [--seed X] [--workers W] [--out DIR]
    asyncact presets

Exit codes: 0 success, 1 some trials failed (outputs kept), 2 invalid
spec or malformed JSON.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .experiment import PRESETS, SpecError, preset_spec, run_experiment, spec_from_json


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=float, default=None, help="shrink devices and trials by this factor")
    p.add_argument("--trials", type=int, default=None, help="override the number of trials")
    p.add_argument("--seed", type=int, default=None, help="override the base seed")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $ASYNCACT_WORKERS or the CPU count)")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asyncact", description="Asynchronous activity detection simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment spec file")
    run.add_argument("--spec", required=True, help="JSON experiment spec")
    _common(run)
    pre = sub.add_parser("preset", help="run a built-in experiment")
    pre.add_argument("name", choices=sorted(PRESETS))
    _common(pre)
    sub.add_parser("presets", help="list built-in experiments")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name in PRESETS:
            print(name)
        return 0
    try:
        if args.command == "run":
            try:
                with open(args.spec) as fh:
                    text = fh.read()
            except OSError as exc:
                print(f"error: cannot read spec: {exc}", file=sys.stderr)
                return 2
            spec = spec_from_json(text)
        else:
            spec = preset_spec(args.name)
        if args.scale is not None:
            spec = spec.scaled(args.scale)
        if args.trials is not None:
            if args.trials < 1:
                raise SpecError("trials: expected a positive integer")
            spec = replace(spec, trials=args.trials)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
        return 2
    return run_experiment(spec, out=args.out, workers=args.workers)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
