"""Command line entry point: ``jcrsim {run,list,describe,export}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError
from .export import FORMATS
from .scenario import builtin_text, list_builtin_scenarios, resolve

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("jcrsim")


def _global_flags(default) -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--seed", type=int, default=default, help="override the scenario seed")
    flags.add_argument("--out-dir", default=default,
                       help="output directory (default results/<name>)")
    flags.add_argument("--sample-rate", type=float, default=default,
                       help="simulation sample rate in Hz")
    flags.add_argument("--threads", type=int, default=default,
                       help="worker threads for per-pulse/per-period work")
    flags.add_argument("-v", "--verbose", action="store_true",
                       default=False if default is None else default)
    return flags


def _parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; the subcommand
    # copies must not carry defaults or they would mask values given up front
    p = argparse.ArgumentParser(prog="jcrsim", description=__doc__, parents=[_global_flags(None)])
    common = _global_flags(argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common],
                         help="run a scenario file or builtin name, write all artifacts")
    run.add_argument("scenario")
    sub.add_parser("list", parents=[common], help="list builtin scenarios")
    desc = sub.add_parser("describe", parents=[common], help="print a builtin scenario file")
    desc.add_argument("name")
    exp = sub.add_parser("export", parents=[common],
                         help="run a scenario and write one artifact format")
    exp.add_argument("--format", required=True, choices=FORMATS)
    exp.add_argument("scenario")
    return p


def _run(args, formats) -> int:
    from .experiments import run_scenario

    sc = resolve(args.scenario).with_overrides(args.seed, args.sample_rate, args.threads,
                                               args.out_dir)
    bundle, out = run_scenario(sc, formats=formats)
    print(f"{bundle.name}: wrote {out} ({bundle.wall_time_s:.1f} s)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list":
            for name, text in list_builtin_scenarios():
                print(f"{name:20s} {text}")
            return EXIT_OK
        if args.command == "describe":
            sys.stdout.write(builtin_text(args.name))
            return EXIT_OK
        if args.command == "run":
            return _run(args, FORMATS)
        return _run(args, (args.format,))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any failure after validation is a runtime error
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
