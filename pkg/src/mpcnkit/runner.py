"""Seeded chain execution, thinning, trace persistence and summaries.

Trace files
-----------
A trace is two UTF-8 files:

``<name>.csv``
    Header ``x_1,...,x_d`` then one row per retained state, every value
    written with 17 significant digits (exact round trip for doubles).
``<name>.meta.json``
    Keys ``format`` (``"mpcnkit-trace"``), ``version``, ``dim``,
    ``n_states``, ``n_steps``, ``burn_in``, ``thin``, ``seed``,
    ``stream_id``, ``accepted_count``, ``acceptance_rate``, ``x0``,
    ``kernel`` and ``target`` (descriptor objects).
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .diagnostics import integrated_autocorrelation
from .errors import ConfigError, CorruptTraceError, DegenerateStateError
from .kernels import MhKernel, simulate
from .rng import RngStream

__all__ = [
    "RunConfig",
    "ChainTrace",
    "run_chain",
    "run_many",
    "summarize",
    "persist_trace",
    "load_trace",
    "meta_path_for",
]

TRACE_FORMAT = "mpcnkit-trace"
TRACE_VERSION = 1


@dataclass
class RunConfig:
    kernel: MhKernel
    x0: Sequence[float]
    n_steps: int
    burn_in: Optional[int] = None
    thin: int = 1
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.n_steps = int(self.n_steps)
        if self.burn_in is None:
            self.burn_in = self.n_steps // 10
        self.burn_in = int(self.burn_in)
        self.thin = int(self.thin)
        if self.n_steps < 0:
            raise ConfigError("n_steps must be non-negative")
        if not 0 <= self.burn_in <= self.n_steps:
            raise ConfigError(f"burn_in must lie in [0, n_steps], got {self.burn_in}")
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if self.x0.shape != (self.kernel.dim,):
            raise ConfigError(f"x0 has shape {self.x0.shape}, expected ({self.kernel.dim},)")
        if self.kernel.kind == "mpcn" and not np.any(self.x0):
            raise DegenerateStateError("MpCN chains cannot start at the origin")

    @property
    def n_retained(self):
        return (self.n_steps - self.burn_in) // self.thin


@dataclass
class ChainTrace:
    """Post-thinning states plus run totals and provenance."""

    states: np.ndarray
    accepted_count: int
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return int(self.meta.get("n_steps", 0))

    @property
    def acceptance_rate(self):
        return self.accepted_count / self.n_steps if self.n_steps else math.nan

    @property
    def dim(self):
        return self.states.shape[1]

    def __len__(self):
        return self.states.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ChainTrace):
            return NotImplemented
        return (
            self.states.shape == other.states.shape
            and np.array_equal(self.states, other.states)
            and self.accepted_count == other.accepted_count
            and self.meta == other.meta
        )


def run_chain(cfg: RunConfig, backend: Optional[str] = None) -> ChainTrace:
    """Run one chain; deterministic for a fixed ``(seed, stream_id)``."""
    d = cfg.kernel.dim
    kept = np.empty((cfg.n_retained, d))
    count = 0
    b, th = cfg.burn_in, cfg.thin

    def sink(block, t0):
        nonlocal count
        # block[i] is the state after step t = t0 + i + 1; keep t = b + j*th, j >= 1
        lo = max(t0 + 1, b + 1)
        first = b + th * -(-(lo - b) // th)
        idx = np.arange(first - t0 - 1, block.shape[0], th)
        if idx.size:
            kept[count : count + idx.size] = block[idx, 0, :]
            count += idx.size

    res = simulate(cfg.kernel, cfg.x0[None, :], cfg.n_steps, RngStream(cfg.seed, cfg.stream_id),
                   sink=sink if cfg.n_retained else None, backend=backend)
    assert count == cfg.n_retained
    acc = int(res.accepted[0])
    meta = {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "dim": d,
        "n_states": int(cfg.n_retained),
        "n_steps": cfg.n_steps,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "seed": cfg.seed,
        "stream_id": cfg.stream_id,
        "accepted_count": acc,
        "acceptance_rate": acc / cfg.n_steps if cfg.n_steps else 0.0,
        "x0": [float(v) for v in cfg.x0],
        "kernel": cfg.kernel.proposal.descriptor(),
        "target": cfg.kernel.target.descriptor(),
    }
    return ChainTrace(kept, acc, meta)


def run_many(cfgs: Sequence[RunConfig], workers: int = 1, backend=None):
    """Run independent chains on a bounded thread pool; results keep input order."""
    if workers <= 1:
        return [run_chain(c, backend) for c in cfgs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_chain(c, backend), cfgs))


def _as_functionals(functionals) -> list:
    if isinstance(functionals, Mapping):
        return list(functionals.items())
    out = []
    for i, f in enumerate(functionals):
        if isinstance(f, tuple):
            out.append(f)
        else:
            out.append((getattr(f, "__name__", f"f{i}"), f))
    return out


def summarize(trace: ChainTrace, functionals) -> list[dict]:
    """Per-functional mean, IACT-adjusted SE, IACT, ESS and acceptance rate.

    ``functionals`` is a mapping name -> f or a list of callables /
    ``(name, f)`` pairs; ``f`` maps the ``(n, d)`` state array to ``(n,)``
    values when vectorized, otherwise it is applied row by row.
    """
    n = len(trace)
    if n == 0:
        raise ConfigError("cannot summarize an empty trace")
    rows = []
    for name, f in _as_functionals(functionals):
        try:
            v = np.asarray(f(trace.states), dtype=float)
            if v.shape != (n,):
                raise ValueError
        except Exception:
            v = np.array([f(s) for s in trace.states], dtype=float)
        mean = float(v.mean())
        var = float(v.var())
        if var == 0.0 or n < 2:
            iact, se = math.inf, 0.0
        else:
            iact = integrated_autocorrelation(v, min_length=min(n, 1000))
            se = math.sqrt(var * max(iact, 1.0) / n)
        ess = n / max(iact, 1.0) if math.isfinite(iact) else 0.0
        rows.append({
            "functional": name,
            "mean": mean,
            "se": se,
            "iact": iact,
            "ess": ess,
            "n": n,
            "acceptance_rate": trace.acceptance_rate,
        })
    return rows


def meta_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def persist_trace(trace: ChainTrace, path) -> Path:
    """Write ``path`` (CSV) and its ``.meta.json`` sidecar; returns the CSV path."""
    path = Path(path)
    meta = dict(trace.meta)
    meta["n_states"] = len(trace)
    meta["dim"] = int(trace.states.shape[1]) if trace.states.ndim == 2 else meta.get("dim")
    meta["accepted_count"] = int(trace.accepted_count)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(f"x_{i + 1}" for i in range(meta["dim"])) + "\n")
            for row in trace.states:
                fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        with open(meta_path_for(path), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def load_trace(path) -> ChainTrace:
    path = Path(path)
    mpath = meta_path_for(path)
    try:
        with open(mpath, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptTraceError(mpath, f"unreadable meta: {exc}") from exc
    for key in ("dim", "n_states", "accepted_count"):
        if not isinstance(meta.get(key), int):
            raise CorruptTraceError(mpath, f"missing or invalid key {key!r}")
    d, n = meta["dim"], meta["n_states"]
    states = np.empty((n, d))
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise CorruptTraceError(path, f"not UTF-8: {exc}") from exc
    if n > 0 and not text.endswith("\n"):
        raise CorruptTraceError(path, "file is truncated (no terminating newline)")
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header != [f"x_{i + 1}" for i in range(d)]:
        raise CorruptTraceError(path, f"unexpected header {header!r}")
    i = 0
    for lineno, row in enumerate(reader, start=2):
        if i >= n:
            raise CorruptTraceError(path, f"more rows than the {n} recorded in meta")
        if len(row) != d:
            raise CorruptTraceError(path, f"line {lineno}: expected {d} fields, got {len(row)}")
        try:
            states[i] = [float(v) for v in row]
        except ValueError as exc:
            raise CorruptTraceError(path, f"line {lineno}: {exc}") from exc
        i += 1
    if i != n:
        raise CorruptTraceError(path, f"found {i} rows, meta records {n}")
    return ChainTrace(states, meta["accepted_count"], meta)
