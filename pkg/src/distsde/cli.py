"""Command-line front end.

Usage::

    distsde <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--strict-th29] [--jobs <n>]

Exit status is 0 when every check passes (warnings allowed), 1 when a check
fails or a numerical module raises, and 2 for configuration errors or
violated hypotheses.  Results land in ``<out>/<config hash>/``.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config, validate
from .suite import FAIL, run_checks

SUBCOMMANDS = {
    "build-zvonkin": ["zvonkin"],
    "solve-pde": ["apriori"],
    "simulate": ["simulate"],
    "heatkernel": ["heatkernel"],
    "ergodicity": ["ergodicity"],
    "krylov": ["krylov"],
    "young": ["young"],
    "oracle": ["oracle"],
    "full-suite": None,
}

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distsde", description="SDEs with distributional drift: checks and artifacts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML config or a manifest.json to re-run")
        p.add_argument("--out", type=Path, default=Path("runs"), help="output root (default: ./runs)")
        p.add_argument("--seed", type=_u64, help="override run.seed")
        p.add_argument("--strict-th29", action="store_true", help="enforce the weak-solution exponent window")
        p.add_argument("--jobs", type=int, default=1, help="worker threads; results do not depend on it")
    return parser


def _checks_for(command: str, cfg: dict) -> list:
    names = SUBCOMMANDS[command]
    if names is None:
        return list(cfg["run"]["checks"])
    return names


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if args.command == "full-suite" and not cfg["run"]["checks"]:
        print("configuration error: run.checks is empty", file=sys.stderr)
        return EXIT_CONFIG
    violations = validate(cfg, strict=args.strict_th29)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_CONFIG
    names = _checks_for(args.command, cfg)
    try:
        manifest = run_checks(cfg, names, args.out, n_jobs=max(1, args.jobs), strict=args.strict_th29)
    except FileExistsError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"{args.command}: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    failed = False
    for name in names:
        res = manifest["checks"][name]
        line = f"{name}: {res['status']}"
        if res["message"]:
            line += f" ({res['message']})"
        print(line)
        failed |= res["status"] == FAIL
    print(f"manifest: {Path(args.out) / manifest['config_hash'] / 'manifest.json'}")
    return EXIT_CHECK if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
