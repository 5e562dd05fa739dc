"""Command-line entry point: ``fastpca run | validate | sweep``."""

import argparse
import logging
import sys
from pathlib import Path

from ..errors import FastPCAError
from . import experiment
from .config import apply_settings, load_config
from .validate import validate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _add_common(p):
    p.add_argument("config", help="experiment INI file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--trials", type=int, help="number of Monte-Carlo trials")
    p.add_argument("--budget", type=int, help="communication budget in units")
    p.add_argument("--accounting", choices=("paper", "payload"))
    p.add_argument("--safe-alpha", action="store_true", default=None,
                   help="use 0.9 x the theoretical step-size bound for FAST-PCA")
    p.add_argument("--jobs", type=int, default=1, help="trials run concurrently")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. gap=0.97 or fastpca.alpha=0.5 (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="fastpca", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment and write CSV traces")
    _add_common(p_run)
    p_run.add_argument("--strict-alpha", action="store_true",
                       help="warn when alpha exceeds the theoretical bound")

    p_val = sub.add_parser("validate", help="run the fixed-seed property checks")
    p_val.add_argument("--alpha", type=float, default=0.5, help="step size for the convergence check")
    p_val.add_argument("--strict-alpha", action="store_true")
    p_val.add_argument("--corrupt-tracker", action="store_true",
                       help="negative control: perturb one tracker mid-run")

    p_sw = sub.add_parser("sweep", help="vary one factor and summarize FAST-PCA")
    _add_common(p_sw)
    p_sw.add_argument("--axis", required=True, choices=("alpha", "beta", "gap"))
    p_sw.add_argument("--values", required=True, type=float, nargs="+")
    return parser


def _config(args):
    cfg = apply_settings(load_config(args.config), args.set)
    return cfg.with_overrides(seed=args.seed, out=args.out, trials=args.trials, budget=args.budget,
                              accounting=args.accounting, safe_alpha=args.safe_alpha)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            ok, lines, secs = validate(args.alpha, args.strict_alpha, args.corrupt_tracker)
            print("\n".join(lines))
            print(f"{'all checks passed' if ok else 'FAILED'} in {secs:.1f} s")
            return EXIT_OK if ok else EXIT_FAIL
        cfg = _config(args)
        if args.command == "run":
            res = experiment.run(cfg, jobs=args.jobs, strict_alpha=args.strict_alpha)
            for w in res["warnings"]:
                print(f"warning: {w}", file=sys.stderr)
            print(f"wrote {len(res['files'])} files to {cfg.out}")
            return EXIT_OK
        if args.command == "sweep":
            text = experiment.sweep(cfg, args.axis, args.values, jobs=args.jobs)
            out = Path(cfg.out) / f"sweep_{args.axis}.csv"
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text)
            print(text, end="")
            return EXIT_OK
    except (FastPCAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
