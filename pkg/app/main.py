# app/main.py
from dotenv import load_dotenv
load_dotenv() # Load environment variables from .env file first

import argparse
import sys
from typing import List, Optional

from app.core.config import settings
from app.core.exceptions import ConfigError, TailSiftError
from app.core.logging import logger, set_verbose
from app.core.models import RunConfig
from app.services.pipeline import Pipeline

COMMANDS = ("phase1", "train", "estimate", "baseline-gss", "oracle-mc", "report", "training-selection")

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailsift",
        description="Multi-fidelity stratified estimation of small failure probabilities",
    )
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.APP_VERSION}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=settings.DEFAULT_CONFIG,
                        help="Run configuration JSON (default: $TAILSIFT_CONFIG)")
    common.add_argument("--output-dir", help="Override the configured output directory")
    common.add_argument("--force", action="store_true",
                        help="Accept upstream artifacts produced under a different config hash")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    common.add_argument("--workers", type=int, help="Worker processes for sample evaluations")
    common.add_argument("--dump-responses", action="store_true",
                        help="Write every HF displacement history to CSV")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("phase1", parents=[common], help="Phase-I SV sampling and stratification")
    sub.add_parser("train", parents=[common], help="Adaptive surrogate training")
    sub.add_parser("estimate", parents=[common], help="MFSS estimation with the trained surrogate")
    baseline = sub.add_parser("baseline-gss", parents=[common], help="HF-only stratified baseline")
    baseline.add_argument("--per-stratum", type=int, help="HF samples per stratum")
    oracle = sub.add_parser("oracle-mc", parents=[common], help="Brute-force HF Monte Carlo reference")
    oracle.add_argument("--samples", type=int, help="Number of HF samples")
    report = sub.add_parser("report", parents=[common], help="Comparison table, cost report and curves")
    report.add_argument("--plot", action="store_true", help="Also write curves.png")
    selection = sub.add_parser("training-selection", parents=[common],
                               help="Stratified vs plain random training-set comparison")
    selection.add_argument("--sizes", type=int, nargs="+", help="Total training-set sizes")
    return parser

def run(args: argparse.Namespace) -> None:
    if not args.config:
        raise ConfigError("no --config given and TAILSIFT_CONFIG is unset")
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    config = RunConfig.load(args.config)
    pipeline = Pipeline(config, n_workers=args.workers, force=args.force,
                        output_dir=args.output_dir, dump_responses=args.dump_responses)

    if args.command == "phase1":
        print(pipeline.phase1())
    elif args.command == "train":
        trajectory = pipeline.train()
        last = trajectory[-1]
        print(f"N_train = {last['n_train']} per stratum, rho_bar = {last['rho_bar']:.4f}, "
              f"delta = {last['delta']:.2%}")
    elif args.command == "estimate":
        report = pipeline.estimate()
        for ls in report.limit_states:
            cov = "n/a" if ls.cov is None else f"{ls.cov:.2%}"
            print(f"{ls.name}: H = {ls.estimate:.4e} (raw {ls.estimate_raw:.4e}), COV {cov}")
        print(f"Speedup {report.speedup:.2f} (N_GSS = {report.n_gss} per stratum)")
    elif args.command == "baseline-gss":
        report = pipeline.baseline_gss(args.per_stratum)
        for ls in report.limit_states:
            print(f"{ls.name}: H = {ls.estimate:.4e}")
    elif args.command == "oracle-mc":
        report = pipeline.oracle_mc(args.samples)
        se = report.extra["binomial_standard_error"]
        for ls in report.limit_states:
            print(f"{ls.name}: P_f = {ls.estimate:.4e} +/- {se[ls.name]:.2e}")
    elif args.command == "report":
        text, flags = pipeline.report(plot=args.plot)
        print(text)
        if flags:
            print("\nFlags: " + ", ".join(flags))
    elif args.command == "training-selection":
        for row in pipeline.training_selection(args.sizes):
            print(f"{row['method']:>4} n={row['size']:<5d} rho_bar = {row['rho_bar']:.4f}")

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbose(args.verbose)
    try:
        run(args)
    except TailSiftError as e:
        logger.error(e.detail)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}: {str(e)}")
        return 1
    return 0

if __name__ == "__main__":
    sys.exit(main())
