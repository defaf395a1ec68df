"""Command line entry point.

Exit codes: 0 all checks pass, 1 a numerical check failed or an upstream
routine raised, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .suites import SUITES, run_suite, write_outputs
from .tables import PLOT_KINDS, TableError, emit_plotdata, read_table

OUT_ENV = "JUMPBVP_OUT"
DEFAULT_OUT = "jumpbvp-out"


def _parser():
    p = argparse.ArgumentParser(prog="jumpbvp", description="Relativistic reflection and jump-cocycle experiments (hbar = 1).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a named suite")
    r.add_argument("config")
    r.add_argument("--suite", required=True, choices=SUITES)
    r.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.add_argument("--threads", type=int, default=1)

    v = sub.add_parser("validate", help="validate a config and report every error")
    v.add_argument("config")

    pl = sub.add_parser("plotdata", help="convert a result table to plot data")
    pl.add_argument("table")
    pl.add_argument("--kind", required=True, choices=PLOT_KINDS)
    pl.add_argument("--out", default=None, help="output file (default <table>.<kind>.dat)")
    pl.add_argument("--loglog", action="store_true", help="write log10 columns for decay plots")
    return p


def _config_errors(e: ConfigError):
    for msg in e.errors:
        print(f"config error: {msg}", file=sys.stderr)
    return 2


def _run(args):
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        return _config_errors(e)
    out = Path(args.out or cfg.output_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        result = run_suite(cfg, args.suite, args.threads)
    except Exception as e:  # upstream failures become a machine-readable record
        out.mkdir(parents=True, exist_ok=True)
        rec = {"suite": args.suite, "config_hash": cfg.hash, "error": type(e).__name__, "message": str(e)}
        (out / f"error_{args.suite}.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for path in write_outputs(result, out):
        print(path)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if result.passed else 1


def _validate(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        return _config_errors(e)
    print(f"ok: {args.config} (config_hash {cfg.hash}, d={cfg.d}, N={cfg.grid.N})")
    return 0


def _plotdata(args):
    src = Path(args.table)
    if not src.is_file():
        print(f"error: table not found: {src}", file=sys.stderr)
        return 2
    dest = args.out or str(src.with_suffix("")) + f".{args.kind}{'.loglog' if args.loglog else ''}.dat"
    try:
        path = emit_plotdata(read_table(src), args.kind, dest, args.loglog)
    except TableError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(path)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return {"run": _run, "validate": _validate, "plotdata": _plotdata}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
