"""Command line entry point: ``mpcnkit {sample,diagnose,experiment}``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical or
runtime failure. Diagnostic messages name the offending config field.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import load_config
from .engine import available_backends
from .errors import ConfigError, DegenerateStateError, DimensionError, ParameterError
from .experiments import DIAGNOSTICS, EXPERIMENTS, cmd_diagnose, cmd_experiment, cmd_sample

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("mpcnkit")

_COMMANDS = {"sample": cmd_sample, "diagnose": cmd_diagnose, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpcnkit", description="MH samplers for heavy-tailed targets.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "sample": "run chains and write traces plus a summary table",
        "diagnose": f"run one diagnostic ({', '.join(DIAGNOSTICS)})",
        "experiment": f"run a named experiment ({', '.join(EXPERIMENTS)})",
    }
    for name, h in helps.items():
        sp = sub.add_parser(name, help=h)
        sp.add_argument("--config", required=True, type=Path, help="INI config file")
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override [run] seed")
        sp.add_argument("--workers", type=int, default=1, help="worker threads for grid points")
        sp.add_argument("--backend", choices=available_backends(), default=None,
                        help="chain engine (default: compiled if available)")
        if name == "diagnose":
            sp.add_argument("--name", default=None, help="override [diagnostic] name")
        if name == "experiment":
            sp.add_argument("--name", default=None, help="override [experiment] name")
    return p


def _attach_log(out: Path) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    h = logging.FileHandler(out / "run.log", mode="a", encoding="utf-8")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(h)
    log.setLevel(logging.INFO)
    return h


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    handler = None
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.set_override("run", "seed", args.seed)
        if getattr(args, "name", None):
            cfg.set_override("diagnostic" if args.command == "diagnose" else "experiment", "name", args.name)
        handler = _attach_log(args.out)
        log.info("start %s config=%s hash=%s workers=%d", args.command, args.config, cfg.hash(), args.workers)
        t0 = time.perf_counter()
        _COMMANDS[args.command](cfg, args.out, args.workers, args.backend)
        log.info("done %s in %.3fs", args.command, time.perf_counter() - t0)
        return EXIT_OK
    except (ConfigError, ParameterError, DimensionError, DegenerateStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        log.error("config error: %s", exc)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.error("runtime error: %s", exc)
        return EXIT_RUNTIME
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
