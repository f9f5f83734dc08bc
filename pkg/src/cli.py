#!/usr/bin/env python3
"""
CLI mode for the stationary-measure laboratory

    python -m src.cli orbit --config ref-sl2 --set x=\"1/4,0\"
"""
import argparse
import logging
import sys
from typing import List, Optional

from .config import LabSettings
from .stationary_lab.exceptions import ConfigError, LabError
from .stationary_lab.experiment_runner import ExperimentRunner, run

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

HELP = {
    "simulate": "Sample a trajectory of the walk",
    "orbit": "Finite orbit of a rational point and its block components",
    "lyapunov": "Top exponent, spectrum and density-point convergence",
    "cartan-check": "Growth/contraction inequalities on random products",
    "tail": "Survival curve of the return time, exact oracle and heavy tail of the induced walk",
    "certify": "Foster-Lyapunov drift certificate for the induced walk",
    "llt1d": "Exact 1-d local limit theorem and return-time law",
    "jointllt": "Monte Carlo joint local limit theorem for (log-norm, chi)",
    "angles": "Law of angles for window-conditioned fiber words",
    "drift": "Exponential drift along fibers",
    "equidist": "Equidistribution of fiber pieces",
    "weyl": "Weyl sums and real-marginal invariance of a trajectory",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default="ref-sl2",
                        help="Walk model: 'ref-sl2' or a JSON file (default: ref-sl2)")
    common.add_argument("--seed", type=int, help="Experiment seed (default: the model's seed)")
    common.add_argument("--out", type=str, help="Output root (default: $STATIONARY_LAB_OUTPUT_DIR or ./runs)")
    common.add_argument("--replicas", type=int, help="Main Monte Carlo sample size of the subcommand")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a parameter (repeatable; values are read as JSON when possible)")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Random walks on T^d x R: experiments and property checks")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="subcommand", required=True)
    for name in ExperimentRunner.SUBCOMMANDS:
        subparsers.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = LabSettings()
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level, logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        run_dir = run(args.subcommand, args.config, args.overrides, seed=args.seed, out=args.out,
                      replicas=args.replicas, settings=settings)
    except LabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1

    print(f"✓ Results saved to {run_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
