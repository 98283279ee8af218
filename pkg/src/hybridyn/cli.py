"""Command line: hybridyn {run, validate, dump-terms, version}."""
from __future__ import annotations

import argparse
import sys

from . import __version__, emit, scenario
from .errors import (BoundaryLeakError, ConfigError, DegreeError, DomainTooSmall, HybridError,
                     IllPosedError, NonGaussianInitial, NormalizationError, StabilityError,
                     TruncationError, UnsupportedPoint)

EXIT_OK, EXIT_CONFIG, EXIT_STABILITY, EXIT_ILLPOSED, EXIT_OTHER = 0, 2, 3, 4, 1


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (StabilityError, BoundaryLeakError, NormalizationError)):
        return EXIT_STABILITY
    if isinstance(exc, (IllPosedError, TruncationError, DomainTooSmall, DegreeError,
                        NonGaussianInitial, UnsupportedPoint)):
        return EXIT_ILLPOSED
    return EXIT_OTHER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridyn", description="Run hybrid-dynamics scenarios")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run a scenario and write its outputs"),
                       ("validate", "check a scenario without running it"),
                       ("dump-terms", "print the compiled generator term list")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="replace a config entry, e.g. time.dt=0.001 (repeatable)")
        if name == "run":
            p.add_argument("--out", required=True, help="output directory")
    sub.add_parser("version", help="print the package version")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        sc = scenario.load_file(args.config, args.override)
        if args.command == "validate":
            print(f"ok: {sc.kind} ({sc.name})")
        elif args.command == "dump-terms":
            print(scenario.dump_terms(sc))
        else:
            res = scenario.run(sc)
            for path in emit.write_all(res.files, args.out):
                print(path)
    except HybridError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)
    except (ValueError, ArithmeticError) as exc:
        # numerical failure not covered by the domain errors
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
