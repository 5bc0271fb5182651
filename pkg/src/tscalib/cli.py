"""Command-line front end.

Subcommands: calibrate, ei-map, extract-compare, fit, predict.
Exit codes: 0 ok, 2 config error, 3 simulator failure, 4 numerical failure.
"""

import argparse
import sys
from dataclasses import replace

from .config import load_study_config
from .errors import (ConfigError, DomainError, FactorizationFailure, NoBracket,
                     SimulatorFailure)
from .study import (run_calibration_study, run_ei_map, run_extract_compare,
                    run_fit, run_predict)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATOR = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tscalib",
        description="Calibrate time-series simulators with an SVD-GP surrogate "
                    "and saddlepoint expected improvement.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="study configuration file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--workers", type=int, default=None, help="parallel replications")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_cal = sub.add_parser("calibrate", help="run replicated sequential calibrations")
    add_common(p_cal)

    p_ei = sub.add_parser("ei-map", help="tabulate saEI vs exact/Monte-Carlo EI")
    add_common(p_ei)
    p_ei.add_argument("--grid", type=int, default=None, help="candidate grid size")

    p_cmp = sub.add_parser("extract-compare", help="naive vs ESL2D extraction accuracy")
    add_common(p_cmp)

    p_fit = sub.add_parser("fit", help="fit and serialize the initial-design model")
    add_common(p_fit)

    p_pred = sub.add_parser("predict", help="predict a series from a saved model")
    p_pred.add_argument("--model", required=True, help="model file written by 'fit'")
    p_pred.add_argument("--x", required=True,
                        help="comma-separated input coordinates on [0,1]^q")
    p_pred.add_argument("--out", default="prediction.csv", help="output CSV path")
    return parser


def _load(args):
    cfg = load_study_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "calibrate":
            run_calibration_study(_load(args), out_dir=args.out)
        elif args.command == "ei-map":
            saei_s, mc_s = run_ei_map(_load(args), out_dir=args.out, grid_n=args.grid)
            print(f"saei_total_s={saei_s:.6f} mc_total_s={mc_s:.6f}")
        elif args.command == "extract-compare":
            run_extract_compare(_load(args), out_dir=args.out)
        elif args.command == "fit":
            path = run_fit(_load(args), out_dir=args.out)
            print(path)
        elif args.command == "predict":
            try:
                coords = [float(v) for v in args.x.replace(",", " ").split()]
            except ValueError:
                raise ConfigError(f"--x expects numbers, got {args.x!r}") from None
            run_predict(args.model, coords, args.out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulatorFailure as exc:
        where = "" if exc.x is None else f" at x={exc.x}"
        print(f"simulator failure{where}: {exc}", file=sys.stderr)
        return EXIT_SIMULATOR
    except (FactorizationFailure, NoBracket, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
