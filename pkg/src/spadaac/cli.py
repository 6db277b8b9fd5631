"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 solver did not converge,
3 validation failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, experiments
from .aac import Algorithm
from .exceptions import (
    ConfigError,
    DegenerateChannelError,
    DegenerateConstellationError,
    DomainError,
    SaturatedSymbolError,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2
EXIT_VALIDATION = 3


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return value


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spadaac", description="SPAD photon-counting AAC experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON experiment file")
    common.add_argument("--out", type=Path, help="output directory (default: out)")
    common.add_argument("--seed", type=_u64, help="master RNG seed")
    common.add_argument(
        "--algorithm", choices=[a.value for a in Algorithm],
        help="restrict to a single algorithm",
    )
    common.add_argument("--trials", type=_positive, help="Monte Carlo trials per point")
    common.add_argument("--workers", type=_positive, help="parallel workers")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("optimize", parents=[common], help="solve a single operating point")
    sub.add_parser("sweep", parents=[common], help="sweep the configured grid")
    sub.add_parser("validate", parents=[common], help="compare analytic results with Monte Carlo")
    sub.add_parser("scan-concavity", parents=[common], help="tabulate d2I/dalpha2 over a grid")
    return parser


def main(argv: list[str] | None = None, *, model_hook=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = experiments.read_config_file(args.config) if args.config else {}
        config = experiments.load_config(
            raw, seed=args.seed, trials=args.trials, algorithm=args.algorithm,
            out=args.out, workers=args.workers,
        )
        out = config.out
        if args.command == "optimize":
            result = experiments.run_point(config)
            path = out / "point.json"
            out.mkdir(parents=True, exist_ok=True)
            path.write_text(experiments.point_json(result))
            print(path)
            if not all(s["converged"] for s in result["solutions"].values()):
                print("solver did not converge", file=sys.stderr)
                return EXIT_NONCONVERGED
        elif args.command == "sweep":
            result = experiments.run_sweep(config)
            for p in result.write(out):
                print(p)
            if result.nonconverged:
                print(f"{len(result.nonconverged)} solve(s) did not converge", file=sys.stderr)
                return EXIT_NONCONVERGED
        elif args.command == "validate":
            report = experiments.validate(config, model_hook=model_hook)
            paths = report.write(out)
            print(paths[0])
            print(paths[1])
            if not report.passed:
                summary = report.summary()
                print(
                    f"validation failed at {len(summary['failures'])} point(s): "
                    f"max TV {summary['max_tv']:.4g}, max |z| {summary['max_abs_z']:.3g}",
                    file=sys.stderr,
                )
                return EXIT_VALIDATION
        else:
            scan, meta = experiments.run_concavity(config)
            for p in experiments.write_concavity(scan, meta, out):
                print(p)
    except (ConfigError, DegenerateConstellationError, DegenerateChannelError,
            DomainError, SaturatedSymbolError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
