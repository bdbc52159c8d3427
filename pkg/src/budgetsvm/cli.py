"""Command line entry point: ``budgetsvm run|gen|report``."""
from __future__ import annotations

import argparse
import logging
import sys

from .datagen import DATASETS, DriftSpec, generate, write_stream
from .errors import InvalidInputError, PlanError
from .experiment import emit_table1_style, parse_plan, run_plan


def _cmd_run(args):
    plan = parse_plan(args.plan)
    seeds = 1 if args.seed_override is not None else len(plan.seeds)
    runs = len(plan.sources()) * seeds * (len(plan.cells()) + len(plan.baselines))
    print(f"{runs} runs", file=sys.stderr)
    path = run_plan(plan, out=args.out, workers=args.workers, seed_override=args.seed_override)
    print(path)
    return 0


def _cmd_gen(args):
    spec = DriftSpec(args.dataset, n_total=args.n_total, n_train=min(args.n_train, args.n_total - 1),
                     seed=args.seed, noise_sigma=args.noise_sigma, class_ratio=args.class_ratio,
                     drift=args.drift)
    write_stream(generate(spec), args.out)
    return 0


def _cmd_report(args):
    sys.stdout.write(emit_table1_style(args.results))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="budgetsvm",
                                     description="Online budgeted SVM experiments on drifting streams.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment plan")
    run.add_argument("plan")
    run.add_argument("--out", help="output directory (default: the plan's 'out' key)")
    run.add_argument("--workers", type=int, help="worker processes (default: the plan's 'workers' key)")
    run.add_argument("--seed-override", type=int, help="run only this seed")
    run.set_defaults(func=_cmd_run)

    gen = sub.add_parser("gen", help="write a synthetic stream in the canonical text format")
    gen.add_argument("dataset", choices=DATASETS)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--n-total", type=int, default=10000)
    gen.add_argument("--n-train", type=int, default=1000)
    gen.add_argument("--noise-sigma", type=float, default=0.5)
    gen.add_argument("--class-ratio", type=float, default=3.0)
    gen.add_argument("--drift", type=float, default=6.0)
    gen.set_defaults(func=_cmd_gen)

    report = sub.add_parser("report", help="print the best strategy per dataset from results.csv")
    report.add_argument("results")
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PlanError, InvalidInputError, OSError) as exc:
        print(f"budgetsvm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
