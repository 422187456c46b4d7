"""Command line interface.

Thin adapter over the pipeline functions: one subcommand per pipeline,
flags mirroring the config keys, settings resolved as defaults < config
file < flags.  Exit codes: 0 success, 1 gradient validation failure,
2 bad input or configuration, 3 diverged run.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import nullcontext

from .errors import DivergenceError, KoopregError, OptimizationDiverged
from .pipelines import (
    COMMANDS,
    SCHEMAS,
    load_config_file,
    resolve_config,
    run_denoise,
    run_eval,
    run_generalize,
    run_gradcheck,
    run_reduce,
    run_synth,
)

_RUNNERS = {
    "synth": run_synth,
    "denoise": run_denoise,
    "generalize": run_generalize,
    "reduce": run_reduce,
    "gradcheck": run_gradcheck,
    "eval": run_eval,
}

_HELP = {
    "synth": "sample a built-in system to CSV (plus orbit/segment for 3-D)",
    "denoise": "restore a noisy lattice field through learned measurements",
    "generalize": "in-fill a sparse field onto a dense grid",
    "reduce": "represent scattered samples with K < N measurements",
    "gradcheck": "validate exact gradients against finite differences",
    "eval": "compute quality metrics over existing CSV artifacts",
}

_GLOBAL = ("out", "seed", "threads", "quiet")


def _add_flags(sub: argparse.ArgumentParser, command: str) -> None:
    sub.add_argument(
        "--config", default=None, help="JSON or TOML file with settings for this command"
    )
    sub.add_argument("--out", default=None, help="output directory (default: .)")
    sub.add_argument("--seed", default=None, help="RNG seed")
    sub.add_argument(
        "--threads",
        default=None,
        help="cap BLAS/OpenMP thread pools (default: KOOPREG_THREADS or unlimited)",
    )
    sub.add_argument(
        "--quiet",
        dest="quiet",
        action="store_const",
        const=True,
        default=None,
        help="suppress progress output",
    )
    for key, (default, _) in SCHEMAS[command].items():
        if key in _GLOBAL:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            sub.add_argument(
                flag, dest=key, action="store_const", const=True, default=None
            )
            sub.add_argument(
                "--no-" + key.replace("_", "-"),
                dest=key,
                action="store_const",
                const=False,
                default=None,
            )
        else:
            shown = "" if default in (None, {}, []) else f" (default: {default})"
            sub.add_argument(flag, dest=key, default=None, help=f"set {key}{shown}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koopreg",
        description="Vector field denoising, generalization and reduction "
        "through unit velocity measurements.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subs.add_parser(command, help=_HELP[command])
        _add_flags(sub, command)
    return parser


def _thread_limit(cfg) -> int | None:
    if cfg.get("threads") is not None:
        return int(cfg["threads"])
    env = os.environ.get("KOOPREG_THREADS")
    return int(env) if env else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        file_cfg = load_config_file(args.config) if args.config else None
        overrides = {
            k: v
            for k, v in vars(args).items()
            if k not in ("command", "config") and v is not None
        }
        cfg = resolve_config(command, file_cfg, overrides)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KoopregError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    limit = _thread_limit(cfg)
    ctx = nullcontext()
    if limit is not None:
        try:
            from threadpoolctl import threadpool_limits

            ctx = threadpool_limits(limits=limit)
        except ImportError:
            if not cfg["quiet"]:
                print("threadpoolctl not installed; --threads ignored", file=sys.stderr)

    try:
        with ctx:
            if command == "gradcheck":
                report = run_gradcheck(cfg)
                return 0 if report["passed"] else 1
            _RUNNERS[command](cfg)
            return 0
    except (OptimizationDiverged, DivergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (KoopregError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
