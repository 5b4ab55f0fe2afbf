"""Command-line front end: run, compare, render, validate.

Exit codes: 0 success, 2 config/input validation failure, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .render import RenderError, render_csv_to_pgm
from .runner import compare_estimators, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfsense",
        description="Reference-signal positioning and radar sensing scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    run = sub.add_parser("run", help="execute a scenario and write its outputs")
    scenario_args(run)

    compare = sub.add_parser("compare", help="paired subspace/EM comparison run")
    scenario_args(compare)

    render = sub.add_parser("render", help="convert a gridded CSV to a PGM image")
    render.add_argument("csv", help="input CSV (row axis, column axis, value)")
    render.add_argument("--out", default=None, help="output PGM path (default: input with .pgm)")
    render.add_argument("--log", action="store_true", help="log-scale the magnitudes")
    render.add_argument("--quiet", action="store_true", help="suppress output path message")

    validate = sub.add_parser("validate", help="check a config and exit")
    validate.add_argument("--config", required=True, help="scenario TOML file")
    validate.add_argument("--quiet", action="store_true", help="suppress the ok message")
    return parser


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = load_config(args.config)
        run_scenario(cfg, out_dir=args.out, seed=args.seed, quiet=args.quiet)
        return 0
    if args.command == "compare":
        cfg = load_config(args.config)
        compare_estimators(cfg, out_dir=args.out, seed=args.seed, quiet=args.quiet)
        return 0
    if args.command == "render":
        out = args.out
        if out is None:
            out = args.csv[:-4] + ".pgm" if args.csv.endswith(".csv") else args.csv + ".pgm"
        render_csv_to_pgm(args.csv, out, log_scale=args.log)
        if not args.quiet:
            print("wrote %s" % out)
        return 0
    if args.command == "validate":
        cfg = load_config(args.config)
        if not args.quiet:
            print("ok: %s scenario %r" % (cfg.kind, cfg.name))
        return 0
    raise ValueError("unknown command %r" % args.command)  # pragma: no cover


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, RenderError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
