"""Config-driven sampling, diagnostics and the headline experiments.

Each command writes tidy CSV tables (one observation per row, a
``config_hash`` column on every row) and JSON documents into an output
directory. Outputs depend only on the config and the seed; wall-clock
information goes to ``run.log`` and nowhere else.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import diagnostics as dg
from .config import Config
from .errors import ConfigError, MpcnError
from .kernels import DEFAULT_RHO, MhKernel, ProposalKernel
from .rng import RngStream
from .runner import RunConfig, persist_trace, run_chain, summarize
from .targets import StudentLike, TargetDensity, make_target

log = logging.getLogger(__name__)

DIAGNOSTICS = ("rwm-property", "drift-ratio", "rejection-prob", "cr", "logq-concentration", "moment")
EXPERIMENTS = ("heavy-tail-comparison", "far-start-hitting", "dimension-scaling", "necessary-conditions")

FUNCTIONALS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "x_1": lambda X: X[:, 0],
    "sq_norm": lambda X: np.einsum("ij,ij->i", X, X),
    "log_sq_norm": lambda X: np.log(np.einsum("ij,ij->i", X, X)),
    "log1p_sq_norm": lambda X: np.log1p(np.einsum("ij,ij->i", X, X)),
}


# ---------------------------------------------------------------- output helpers

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def write_table(path: Path, columns: Sequence[str], rows: Sequence[dict], config_hash: str) -> Path:
    """Tidy CSV with a trailing ``config_hash`` column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns) + ["config_hash"])
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns] + [config_hash])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dg._jsonable(doc), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _pool_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _seed(cfg: Config):
    return cfg.get_int("run", "seed", 0)


def _direction(dim, rng: RngStream):
    g = rng.standard_normal(dim)
    return g / np.linalg.norm(g)


def parse_target_spec(spec: str, dim: int) -> TargetDensity:
    """``family[:key=value...]``, e.g. ``student:alpha=6`` or ``genexp:c=1:p=4``."""
    parts = [p.strip() for p in spec.split(":") if p.strip()]
    if not parts:
        raise ConfigError("empty target spec")
    params = {}
    for p in parts[1:]:
        if "=" not in p:
            raise ConfigError(f"bad target parameter {p!r} in {spec!r}")
        k, v = p.split("=", 1)
        try:
            params[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"bad value in target spec {spec!r}") from None
    try:
        return make_target(parts[0], dim, **params)
    except (MpcnError, TypeError) as exc:
        raise ConfigError(f"target spec {spec!r}: {exc}") from exc


def _target_label(t: TargetDensity) -> str:
    desc = t.descriptor()
    bits = [desc["family"]] + [f"{k}={_fmt(v)}" for k, v in desc.items() if k not in ("family", "dim")]
    return ":".join(bits)


def student_log1p_expectation(d: int, alpha: float) -> float:
    """``E[log(1 + ||x||^2)]`` under ``(1 + ||x||^2)^{-alpha/2}`` on ``R^d`` by radial quadrature."""
    if not alpha > d:
        return math.inf
    dens = lambda r: r ** (d - 1) * (1.0 + r * r) ** (-0.5 * alpha)
    num = integrate.quad(lambda r: math.log1p(r * r) * dens(r), 0, np.inf, limit=200, epsabs=0, epsrel=1e-11)[0]
    den = integrate.quad(dens, 0, np.inf, limit=200, epsabs=0, epsrel=1e-11)[0]
    return num / den


# ---------------------------------------------------------------- sample

def cmd_sample(cfg: Config, out: Path, workers: int = 1, backend=None) -> dict:
    target = cfg.target()
    kernel = cfg.kernel(target)
    x0 = cfg.x0(target.dim)
    n_steps = cfg.get_int("run", "n_steps", required=True)
    chains = cfg.get_int("run", "chains", 1)
    names = cfg.get_list("run", "functionals", str, list(FUNCTIONALS))
    unknown = [n for n in names if n not in FUNCTIONALS]
    if unknown:
        raise ConfigError(f"field 'run.functionals': unknown names {unknown}; valid: {sorted(FUNCTIONALS)}")
    base_stream = cfg.get_int("run", "stream_id", 0)
    try:
        runs = [
            RunConfig(kernel, x0, n_steps, cfg.get_int("run", "burn_in", None),
                      cfg.get_int("run", "thin", 1), _seed(cfg), base_stream + i)
            for i in range(chains)
        ]
    except MpcnError as exc:
        raise ConfigError(f"[run] {exc}") from exc
    traces = _pool_map(lambda rc: run_chain(rc, backend), runs, workers)
    h = cfg.hash()
    rows = []
    files = []
    for i, tr in enumerate(traces):
        name = "trace.csv" if chains == 1 else f"trace_{i:03d}.csv"
        files.append(str(persist_trace(tr, out / name)))
        if len(tr):
            for r in summarize(tr, {n: FUNCTIONALS[n] for n in names}):
                rows.append(dict(r, chain=i, stream_id=tr.meta["stream_id"]))
    cols = ["chain", "stream_id", "functional", "mean", "se", "iact", "ess", "n", "acceptance_rate"]
    write_table(out / "summary.csv", cols, rows, h)
    return {"traces": files, "summary": rows}


# ---------------------------------------------------------------- diagnose

def _diag_kernel(cfg: Config, target):
    if cfg.has("kernel"):
        return cfg.kernel(target)
    return MhKernel.mpcn(target, cfg.get_float("diagnostic", "rho", DEFAULT_RHO))


def parse_states(specs, dim, rng: RngStream):
    """``norm[:e1|random]`` entries; random directions come from ``rng`` in order."""
    states = []
    for spec in specs:
        norm, _, how = spec.partition(":")
        how = how.strip() or "e1"
        try:
            r = float(norm)
        except ValueError:
            raise ConfigError(f"field 'diagnostic.states': bad norm in {spec!r}") from None
        if how == "e1":
            u = np.zeros(dim)
            u[0] = 1.0
        elif how == "random":
            u = _direction(dim, rng)
        else:
            raise ConfigError(f"field 'diagnostic.states': direction must be e1 or random, got {how!r}")
        states.append(r * u)
    return states


def cmd_diagnose(cfg: Config, out: Path, workers: int = 1, backend=None) -> list:
    name = cfg.get_str("diagnostic", "name", required=True)
    if name not in DIAGNOSTICS:
        raise ConfigError(f"unknown diagnostic {name!r}; valid names: {', '.join(DIAGNOSTICS)}")
    target = cfg.target()
    seed = _seed(cfg)
    n = cfg.get_int("diagnostic", "n", 100_000)
    h = cfg.hash()
    points = []  # (label, thunk(rng) -> DiagnosticReport)

    if name == "rwm-property":
        kernel = _diag_kernel(cfg, target)
        specs = cfg.get_list("diagnostic", "states", str, ["1:e1", "1e6:e1", "1e-6:random"])
        states = parse_states(specs, target.dim, RngStream(seed, 10_000))
        points.append(("all", lambda rng: dg.test_rwm_property(kernel, states, n, rng)))
    elif name == "drift-ratio":
        kernel = _diag_kernel(cfg, target)
        try:
            spec = dg.DriftSpec(cfg.get_float("diagnostic", "s", 0.5))
        except MpcnError as exc:
            raise ConfigError(f"field 'diagnostic.s': {exc}") from exc
        for r in cfg.get_list("diagnostic", "norms", float, [1e-6, 1e6]):
            x = np.zeros(target.dim)
            x[0] = r
            points.append((f"norm={r:g}", lambda rng, x=x: dg.estimate_drift_ratio(kernel, spec, x, n, rng)))
        if kernel.kind == "mpcn" and target.tail.is_regular:
            for regime in (dg.AT_ZERO, dg.AT_INFINITY):
                points.append((f"limit={regime}", lambda rng, regime=regime: _oracle_report(
                    target, kernel, spec, regime, n, rng)))
    elif name == "rejection-prob":
        kernel = _diag_kernel(cfg, target)
        for r in cfg.get_list("diagnostic", "norms", float, [10.0, 100.0, 1000.0]):
            x = np.zeros(target.dim)
            x[0] = r
            points.append((f"norm={r:g}", lambda rng, x=x: dg.estimate_rejection_probability(kernel, x, n, rng)))
    elif name == "logq-concentration":
        kernel = _diag_kernel(cfg, target)
        C = cfg.get_float("diagnostic", "C", 10.0)
        for r in cfg.get_list("diagnostic", "norms", float, [100.0, 1000.0]):
            x = np.zeros(target.dim)
            x[0] = r
            points.append((f"norm={r:g}", lambda rng, x=x: dg.test_logq_concentration(kernel, x, C, n, rng)))
    elif name == "cr":
        rho = cfg.get_float("diagnostic", "rho", cfg.get_float("kernel", "rho", DEFAULT_RHO))
        grid = cfg.get_int("diagnostic", "grid", 10_000)
        for r in cfg.get_list("diagnostic", "r_grid", float, [1e2, 1e4, 1e6]):
            points.append((f"r={r:g}", lambda rng, r=r: _cr_report(target, r, rho, grid)))
    else:  # moment
        for delta in cfg.get_list("diagnostic", "delta", float, [0.5, 1.0, 2.0, 4.0]):
            points.append((f"delta={delta:g}", lambda rng, delta=delta: _moment_report(target, delta)))

    def run(i):
        label, thunk = points[i]
        return label, thunk(RngStream(seed, i))

    try:
        results = _pool_map(run, list(range(len(points))), workers)
    except (MpcnError, ValueError) as exc:
        if isinstance(exc, MpcnError) and not isinstance(exc, ConfigError):
            raise ConfigError(str(exc)) from exc
        raise
    rows = []
    for i, (label, rep) in enumerate(results):
        rep.details["point"] = label
        rep.details["config_hash"] = h
        (out / f"{name}_{i:02d}.json").parent.mkdir(parents=True, exist_ok=True)
        (out / f"{name}_{i:02d}.json").write_text(rep.to_json(), encoding="utf-8")
        rows.append({"index": i, "point": label, "statistic": rep.statistic,
                     "std_error": rep.std_error, "verdict": rep.verdict.value})
    write_table(out / f"{name}.csv", ["index", "point", "statistic", "std_error", "verdict"], rows, h)
    return [rep for _, rep in results]


def _oracle_report(target, kernel, spec, regime, n, rng):
    est = dg.drift_limit_oracle(target.tail.alpha, target.dim, kernel.proposal.rho, spec.s, regime, n, rng)
    rep = dg.DiagnosticReport(est.mean, est.std_error, dg._sign_verdict(est), {
        "regime": regime, "s": spec.s, "n": n, "kernel": kernel.descriptor(),
        "verdict_rule": "sign of the 99% CI of the limiting drift ratio",
    })
    return rep


def _cr_report(target, r, rho, grid):
    cr = dg.compute_cr(target, r, rho, grid)
    threshold = 0.5 * (1.0 - rho)
    verdict = dg.Verdict.GEOMETRIC if cr >= threshold else dg.Verdict.NON_GEOMETRIC
    return dg.DiagnosticReport(cr, None, verdict, {
        "r": r, "rho": rho, "grid": grid, "threshold": threshold,
        "target": target.descriptor(),
        "verdict_rule": "pCN: C_r >= (1-rho)/2 is necessary (as a liminf); evaluated at this finite r",
    })


def _moment_report(target, delta):
    finite = dg.moment_condition(target, delta)
    exp_finite = dg.exponential_moment_condition(target, delta)
    return dg.DiagnosticReport(1.0 if finite else 0.0, None,
                               dg.Verdict.GEOMETRIC if finite else dg.Verdict.NON_GEOMETRIC, {
        "delta": delta, "target": target.descriptor(),
        "polynomial_moment_finite": finite, "exponential_moment_finite": exp_finite,
        "verdict_rule": "MpCN necessary condition: some polynomial moment finite",
    })


# ---------------------------------------------------------------- experiments

def _rwm_scale(cfg, d):
    v = cfg.get_str("experiment", "rwm_scale", None)
    if v is None:
        return None
    if v == "auto":
        return 2.38 / math.sqrt(d)
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"field 'experiment.rwm_scale' must be a number or 'auto', got {v!r}") from None


def _make_kernel(kind, target, cfg, default_scale):
    rho = cfg.get_float("experiment", "rho", DEFAULT_RHO)
    try:
        if kind == "rwm":
            s = _rwm_scale(cfg, target.dim)
            return MhKernel.rwm(target, default_scale(target.dim) if s is None else s)
        if kind in ("pcn", "mpcn"):
            return MhKernel(target, ProposalKernel(kind, rho=rho))
    except MpcnError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"field 'experiment.kernels': unknown kernel {kind!r}")


def exp_heavy_tail_comparison(cfg, out, workers, backend):
    dims = cfg.get_list("experiment", "dims", int, [2])
    alphas = cfg.get_list("experiment", "alphas", float, [6.0])
    kinds = cfg.get_list("experiment", "kernels", str, ["rwm", "pcn", "mpcn"])
    n_steps = cfg.get_int("experiment", "n_steps", 100_000)
    x0_norm = cfg.get_float("experiment", "x0_norm", 1.0)
    seed = _seed(cfg)
    grid = [(d, a, kind) for d in dims for a in alphas for kind in kinds]

    def run(i):
        d, a, kind = grid[i]
        target = StudentLike(d, a)
        k = _make_kernel(kind, target, cfg, lambda d: 2.38 / math.sqrt(d))
        x0 = np.zeros(d)
        x0[0] = x0_norm
        tr = run_chain(RunConfig(k, x0, n_steps, seed=seed, stream_id=i), backend)
        row = summarize(tr, {"log1p_sq_norm": FUNCTIONALS["log1p_sq_norm"]})[0]
        truth = student_log1p_expectation(d, a)
        row.update(kernel=kind, dim=d, alpha=a, truth=truth,
                   z_score=(row["mean"] - truth) / row["se"] if row["se"] > 0 else math.nan)
        return row

    rows = _pool_map(run, list(range(len(grid))), workers)
    cols = ["kernel", "dim", "alpha", "functional", "mean", "se", "truth", "z_score", "iact", "ess", "n",
            "acceptance_rate"]
    write_table(out / "ess.csv", cols, rows, cfg.hash())
    return {"rows": rows}


def exp_far_start_hitting(cfg, out, workers, backend):
    d = cfg.get_int("experiment", "dim", 2)
    alpha = cfg.get_float("experiment", "alpha", 6.0)
    kinds = cfg.get_list("experiment", "kernels", str, ["mpcn", "rwm"])
    norms = cfg.get_list("experiment", "norms", float, [1e2, 1e4, 1e8, 1e12, 1e16])
    radius = cfg.get_float("experiment", "radius", 10.0)
    replicas = cfg.get_int("experiment", "replicas", 50)
    budget = cfg.get_int("experiment", "budget", 1_000_000)
    seed = _seed(cfg)
    target = StudentLike(d, alpha)
    grid = [(kind, r) for kind in kinds for r in norms]

    def run(i):
        kind, r = grid[i]
        k = _make_kernel(kind, target, cfg, lambda d: 1.0)
        x0 = np.zeros((replicas, d))
        x0[:, 0] = r
        return dg.hitting_times(k, x0, radius, budget, RngStream(seed, i), backend=backend)

    results = _pool_map(run, list(range(len(grid))), workers)
    rows, reps = [], []
    for (kind, r), t in zip(grid, results):
        hits = t[t >= 0]
        finite = np.where(t >= 0, t.astype(float), math.inf)
        med = float(np.median(finite))
        rows.append({
            "kernel": kind, "x0_norm": r, "log10_x0_norm": math.log10(r),
            "median_steps": med if math.isfinite(med) else None,
            "median_is_timeout": not math.isfinite(med),
            "mean_steps_of_hits": float(hits.mean()) if hits.size else None,
            "n_hit": int(hits.size), "n_timeout": int((t < 0).sum()),
            "replicas": replicas, "budget": budget,
        })
        for j, v in enumerate(t):
            reps.append({"kernel": kind, "x0_norm": r, "replica": j,
                         "steps": int(v) if v >= 0 else None, "timeout": bool(v < 0)})
    h = cfg.hash()
    write_table(out / "hitting.csv", ["kernel", "x0_norm", "log10_x0_norm", "median_steps", "median_is_timeout",
                                      "mean_steps_of_hits", "n_hit", "n_timeout", "replicas", "budget"], rows, h)
    write_table(out / "hitting_replicas.csv", ["kernel", "x0_norm", "replica", "steps", "timeout"], reps, h)
    return {"rows": rows, "radius": radius}


def exp_dimension_scaling(cfg, out, workers, backend):
    dims = cfg.get_list("experiment", "dims", int, [2, 5, 10, 20, 50])
    offset = cfg.get_float("experiment", "alpha_offset", 4.0)
    kinds = cfg.get_list("experiment", "kernels", str, ["rwm", "mpcn"])
    n_steps = cfg.get_int("experiment", "n_steps", 200_000)
    seed = _seed(cfg)
    grid = [(kind, d) for kind in kinds for d in dims]

    def run(i):
        kind, d = grid[i]
        target = StudentLike(d, d + offset)
        k = _make_kernel(kind, target, cfg, lambda d: 2.38 / math.sqrt(d))
        x0 = np.zeros(d)
        x0[0] = math.sqrt(d)
        tr = run_chain(RunConfig(k, x0, n_steps, seed=seed, stream_id=i), backend)
        row = summarize(tr, {"log_sq_norm": FUNCTIONALS["log_sq_norm"]})[0]
        row.update(kernel=kind, dim=d, alpha=d + offset, n_steps=n_steps,
                   step_scale=k.proposal.scale, rho=k.proposal.rho)
        return row

    rows = _pool_map(run, list(range(len(grid))), workers)
    growth = {}
    for kind in kinds:
        by_d = {r["dim"]: r["iact"] for r in rows if r["kernel"] == kind}
        growth[kind] = by_d[max(dims)] / by_d[min(dims)]
    summary = {"iact_growth_factor": growth, "d_min": min(dims), "d_max": max(dims)}
    if "rwm" in growth and "mpcn" in growth:
        summary["rwm_grows_faster_than_mpcn"] = growth["rwm"] > growth["mpcn"]
    cols = ["kernel", "dim", "alpha", "functional", "iact", "ess", "n", "n_steps", "acceptance_rate",
            "step_scale", "rho"]
    write_table(out / "iact.csv", cols, rows, cfg.hash())
    return {"rows": rows, **summary}


def exp_necessary_conditions(cfg, out, workers, backend):
    d = cfg.get_int("experiment", "dim", 2)
    specs = cfg.get_list("experiment", "targets", str,
                         ["student:alpha=6", "gaussian:sigma=1", "genexp:c=1:p=1", "genexp:c=1:p=4"])
    targets = [parse_target_spec(s, d) for s in specs]
    rho = cfg.get_float("experiment", "rho", DEFAULT_RHO)
    r_grid = cfg.get_list("experiment", "r_grid", float, [1e1, 1e2, 1e4, 1e6])
    norms = cfg.get_list("experiment", "norms", float, [10.0, 100.0, 1000.0])
    deltas = cfg.get_list("experiment", "deltas", float, [0.5, 1.0, 2.0, 4.0])
    n = cfg.get_int("experiment", "n", 10_000)
    kinds = ["rwm", "pcn", "mpcn"]
    seed = _seed(cfg)
    threshold = 0.5 * (1.0 - rho)

    cr_rows = [{"target": _target_label(t), "r": r, "C_r": dg.compute_cr(t, r, rho), "threshold": threshold}
               for t in targets for r in r_grid]
    for row in cr_rows:
        row["below_threshold"] = row["C_r"] < threshold

    mom_rows = [{"target": _target_label(t), "delta": dl,
                 "polynomial_moment_finite": dg.moment_condition(t, dl),
                 "exponential_moment_finite": dg.exponential_moment_condition(t, dl)}
                for t in targets for dl in deltas]

    grid = [(ti, kind, r) for ti in range(len(targets)) for kind in kinds for r in norms]

    def run(i):
        ti, kind, r = grid[i]
        k = _make_kernel(kind, targets[ti], cfg, lambda d: 1.0)
        x = np.zeros(d)
        x[0] = r
        return dg.estimate_rejection_probability(k, x, n, RngStream(seed, i))

    reps = _pool_map(run, list(range(len(grid))), workers)
    rej_rows = [{"target": _target_label(targets[ti]), "kernel": kind, "x_norm": r,
                 "rejection_prob": rep.statistic, "se": rep.std_error}
                for (ti, kind, r), rep in zip(grid, reps)]

    verdict_rows = []
    r_max = max(r_grid)
    for t in targets:
        label = _target_label(t)
        exp_any = any(dg.exponential_moment_condition(t, dl) for dl in deltas)
        verdict_rows.append({
            "target": label, "kernel": "rwm",
            "verdict": (dg.Verdict.GEOMETRIC if exp_any else dg.Verdict.NON_GEOMETRIC).value,
            "rule": "exponential moment finite for some tested delta (necessary for RWM)",
        })
        cr = dg.compute_cr(t, r_max, rho)
        verdict_rows.append({
            "target": label, "kernel": "pcn",
            "verdict": (dg.Verdict.GEOMETRIC if cr >= threshold else dg.Verdict.NON_GEOMETRIC).value,
            "rule": f"C_r at r={r_max:g} versus (1-rho)/2 (necessary for pCN)",
        })
        poly_any = any(dg.moment_condition(t, dl) for dl in deltas)
        verdict_rows.append({
            "target": label, "kernel": "mpcn",
            "verdict": (dg.Verdict.GEOMETRIC if poly_any else dg.Verdict.NON_GEOMETRIC).value,
            "rule": "polynomial moment finite for some tested delta (necessary for MpCN)",
        })
    h = cfg.hash()
    write_table(out / "cr.csv", ["target", "r", "C_r", "threshold", "below_threshold"], cr_rows, h)
    write_table(out / "moments.csv", ["target", "delta", "polynomial_moment_finite", "exponential_moment_finite"],
                mom_rows, h)
    write_table(out / "rejection.csv", ["target", "kernel", "x_norm", "rejection_prob", "se"], rej_rows, h)
    write_table(out / "verdicts.csv", ["target", "kernel", "verdict", "rule"], verdict_rows, h)
    return {"verdicts": verdict_rows, "cr": cr_rows, "moments": mom_rows, "rejection": rej_rows}


_EXPERIMENTS = {
    "heavy-tail-comparison": exp_heavy_tail_comparison,
    "far-start-hitting": exp_far_start_hitting,
    "dimension-scaling": exp_dimension_scaling,
    "necessary-conditions": exp_necessary_conditions,
}


def cmd_experiment(cfg: Config, out: Path, workers: int = 1, backend=None) -> dict:
    name = cfg.get_str("experiment", "name", required=True)
    if name not in _EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENTS)}")
    result = _EXPERIMENTS[name](cfg, out, workers, backend)
    summary = {"experiment": name, "config_hash": cfg.hash(), "config": cfg.canonical(), **result}
    write_json(out / "summary.json", summary)
    return summary
