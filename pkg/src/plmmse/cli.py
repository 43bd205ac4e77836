"""Command-line front end.

Exit status: 0 on success, 1 on a usage error, 2 on a runtime error or a
failed self-test.
"""

from __future__ import annotations

import argparse
import re
import sys

from ._errors import PLMMSEError
from .harness import EXPERIMENTS, ExperimentConfig, load_config, run
from .results import write_csv

__all__ = ["main", "build_parser"]

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


_DESCRIPTIONS = {
    "toy": "Binary signal observed twice: PLMMSE against naive averaging.",
    "sparse": "Sparse signal, blurred and rescaled channels: estimator MSE versus input SNR.",
    "deblur": "Fusion of a blurred and a noisy 1-D signal over seeded trials.",
    "track": "Maneuvering-target tracking: PLMMSE, Kalman and IMM versus acceleration noise.",
    "minimax": "Worst-case construction: PLMMSE against nonlinear challengers.",
}


def _fmt_default(value):
    return "auto" if value is None else str(value)


def build_parser():
    parser = _Parser(
        prog="plmmse",
        description="Partially linear MMSE experiments and self-tests.",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, schema in EXPERIMENTS.items():
        p = sub.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name])
        p.add_argument("--config", metavar="PATH",
                       help="key = value file; flags given here override its keys")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed, unsigned 64-bit integer (default 0)")
        p.add_argument("--out", metavar="PATH", help="CSV output path (default: stdout)")
        p.add_argument("--store-runs", action="store_true",
                       help="also write per-run values, at full precision, to PATH.runs.csv "
                            "(requires --out)")
        for key, (_, default, text) in schema.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE",
                           help=f"{text} [default: {_fmt_default(default)}]")
    st = sub.add_parser("selftest", help="Run the oracle-equivalence suites.",
                        description="Run the oracle-equivalence suites and print one line per suite.")
    st.add_argument("--level", choices=("quick", "full"), default="quick",
                    help="quick (about 1 s) or full (about 10 s)")
    st.add_argument("--seed", type=int, default=0, help="root seed (integer, default 0)")
    return parser


def _experiment_config(args):
    schema = EXPERIMENTS[args.command]
    overrides = {k: getattr(args, k) for k in schema if getattr(args, k) is not None}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    if args.config:
        return load_config(args.config, overrides, experiment=args.command)
    seed = overrides.pop("seed", 0)
    out = overrides.pop("out", "")
    return ExperimentConfig.build(args.command, overrides, seed, out)


def _run_selftest(args, stdout):
    from .selftest import run_selftest

    results = run_selftest(args.level, args.seed)
    for r in results:
        print(r.line(), file=stdout)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed suites: {', '.join(failed)}", file=stdout)
        return RUNTIME_ERROR
    return 0


_NEGATIVE_VALUE = re.compile(r"^-[0-9.]")


def _attach_negative_values(argv):
    """Join ``--flag -5:1:3`` into ``--flag=-5:1:3`` so grids may start below zero."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEGATIVE_VALUE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None, stdout=None, stderr=None):
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(stderr)
        print("plmmse: error: a subcommand is required", file=stderr)
        return USAGE_ERROR
    try:
        args = parser.parse_args(_attach_negative_values(argv))
    except UsageError as exc:
        print(str(exc), file=stderr, end="")
        return USAGE_ERROR
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else USAGE_ERROR
    if args.command is None:
        parser.print_usage(stderr)
        return USAGE_ERROR
    if args.command == "selftest":
        try:
            return _run_selftest(args, stdout)
        except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
            print(f"plmmse selftest: {exc}", file=stderr)
            return RUNTIME_ERROR
    try:
        config = _experiment_config(args)
    except PLMMSEError as exc:
        # an unreadable config file is a runtime problem, a bad value a usage one
        code = USAGE_ERROR if isinstance(exc, ValueError) else RUNTIME_ERROR
        print(f"plmmse {args.command}: {exc}", file=stderr)
        return code
    if args.store_runs and not config.out:
        print(f"plmmse {args.command}: --store-runs requires --out", file=stderr)
        return USAGE_ERROR
    try:
        table = run(config)
        if config.out:
            write_csv(table, config.out)
            if args.store_runs:
                # full precision so standard errors can be recomputed exactly
                write_csv(table.runs_table(), config.out + ".runs.csv", digits=17)
        else:
            stdout.write(table.to_csv_string())
    except PLMMSEError as exc:
        print(f"plmmse {args.command}: {exc}", file=stderr)
        return RUNTIME_ERROR
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
