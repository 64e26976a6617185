"""Acceptance suite: every criterion at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``. Each criterion prints one
``ACn PASS|FAIL`` line. Criteria that map onto a CLI command are run
through the CLI so that the determinism check (AC9) covers the real
output files.
"""
import csv
import json
import math
import sys
import tempfile
import textwrap
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))

from mpcnkit import cli  # noqa: E402
from mpcnkit.diagnostics import ks_critical_one_sample  # noqa: E402
from mpcnkit.experiments import write_json  # noqa: E402
from mpcnkit.kernels import MhKernel, ProposalKernel, mpcn_proposal_log_density, simulate  # noqa: E402
from mpcnkit.rng import RngStream  # noqa: E402
from mpcnkit.targets import Gaussian  # noqa: E402
from oracles import mpcn_density_by_quadrature, random_pairs  # noqa: E402

pytestmark = pytest.mark.acceptance


def _cli(verb, out, text, *extra):
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "config.ini"
    cfg.write_text(textwrap.dedent(text))
    rc = cli.main([verb, "--config", str(cfg), "--out", str(out), *map(str, extra)])
    if rc != 0:
        raise RuntimeError(f"mpcnkit {verb} exited with {rc}")


def _json(path):
    return json.loads(Path(path).read_text())


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# each returns (passed, detail); outputs land under ``out``


def ac1(out: Path):
    worst = 0.0
    ref = ProposalKernel.mpcn().reference
    for d in (2, 5, 10):
        X, Y = random_pairs(d, 1000, seed=100 + d)
        for x, y in zip(X, Y):
            lhs = ref.log_density(x) + mpcn_proposal_log_density(x, y, 0.8)
            rhs = ref.log_density(y) + mpcn_proposal_log_density(y, x, 0.8)
            worst = max(worst, abs(lhs - rhs))
    X, Y = random_pairs(2, 20, seed=7)
    rel = max(
        abs(math.exp(mpcn_proposal_log_density(x, y, 0.8)) / mpcn_density_by_quadrature(x, y, 0.8) - 1.0)
        for x, y in zip(X, Y)
    )
    write_json(out / "ac1.json", {"max_reversibility_gap": worst, "max_quadrature_rel_error": rel})
    return worst < 1e-10 and rel < 1e-6, f"reversibility gap {worst:.2e} (<1e-10), quadrature rel err {rel:.2e} (<1e-6)"


STUDENT = """
[target]
family = student
dim = 2
alpha = 6
[run]
seed = {seed}
"""


def ac2(out: Path):
    base = STUDENT.format(seed=2) + "[diagnostic]\nname = rwm-property\nn = 100000\nstates = 1:e1, 1e6:e1, 1e-6:random\n"
    _cli("diagnose", out / "mpcn", base + "[kernel]\nkind = mpcn\nrho = 0.8\n")
    _cli("diagnose", out / "pcn", base + "[kernel]\nkind = pcn\nrho = 0.8\n")
    m = _json(out / "mpcn" / "rwm-property_00.json")
    p = _json(out / "pcn" / "rwm-property_00.json")
    md = m["details"]
    ok_m = md["rwm_property_holds"] and max(md["pairwise_ks"].values()) < md["pairwise_critical"] \
        and md["symmetry_ks"] < md["symmetry_critical"]
    ok_p = p["statistic"] > p["details"]["pairwise_critical"]
    return ok_m and ok_p, (
        f"MpCN max KS {m['statistic']:.4f} / sym {md['symmetry_ks']:.4f} vs crit {md['pairwise_critical']:.4f}; "
        f"pCN KS {p['statistic']:.3f} > crit")


def ac3(out: Path):
    _cli("diagnose", out, STUDENT.format(seed=3) + textwrap.dedent("""
        [kernel]
        kind = mpcn
        rho = 0.8
        [diagnostic]
        name = drift-ratio
        s = 0.5
        n = 100000
        norms = 1e-6, 1e6, 1e8
    """))
    reps = {r["point"]: r for r in _rows(out / "drift-ratio.csv")}
    z99 = 2.5758293035489004
    neg = all(
        float(reps[p]["statistic"]) + z99 * float(reps[p]["std_error"]) < 0 for p in ("norm=1e-06", "norm=1e+06")
    )
    far, orc = reps["norm=1e+08"], reps["limit=at_infinity"]
    gap = abs(float(far["statistic"]) - float(orc["statistic"]))
    tol = 3 * math.hypot(float(far["std_error"]), float(orc["std_error"]))
    return neg and gap < tol, (
        f"ratio at 1e-6 {float(reps['norm=1e-06']['statistic']):.4f}, at 1e6 {float(reps['norm=1e+06']['statistic']):.4f} "
        f"(99% CI below 0); |est(1e8) - oracle| {gap:.2e} < 3SE {tol:.2e}")


def ac4(out: Path):
    grid = "\n[diagnostic]\nname = cr\nrho = 0.8\nr_grid = {}\n"
    _cli("diagnose", out / "gaussian", "[target]\nfamily = gaussian\ndim = 2\nsigma = 1\n" + grid.format("10, 1e3, 1e6"))
    _cli("diagnose", out / "student", "[target]\nfamily = student\ndim = 2\nalpha = 6\n" + grid.format("1e6"))
    _cli("diagnose", out / "genexp", "[target]\nfamily = genexp\ndim = 2\nc = 1\np = 1\n" + grid.format("1e6"))
    g = [float(r["statistic"]) for r in _rows(out / "gaussian" / "cr.csv")]
    s = float(_rows(out / "student" / "cr.csv")[0]["statistic"])
    e = float(_rows(out / "genexp" / "cr.csv")[0]["statistic"])
    want = (1 - 0.8**2) / 2
    dev = max(abs(v - want) for v in g)
    return len(g) == 3 and dev < 1e-6 and s < 1e-4 and e < 1e-3, (
        f"Gaussian max |C_r - 0.18| {dev:.1e}; StudentLike C_1e6 {s:.2e} (<1e-4); GenExp(p=1) C_1e6 {e:.2e} (<1e-3)")


def ac5(out: Path):
    diag = "[kernel]\nkind = mpcn\nrho = 0.8\n[diagnostic]\nname = logq-concentration\nC = 10\nn = 100000\nnorms = {}\n"
    _cli("diagnose", out / "gaussian", "[target]\nfamily = gaussian\ndim = 2\nsigma = 1\n[run]\nseed = 5\n" + diag.format("1e3"))
    _cli("diagnose", out / "student", STUDENT.format(seed=5) + diag.format("1e6"))
    g = float(_rows(out / "gaussian" / "logq-concentration.csv")[0]["statistic"])
    s = float(_rows(out / "student" / "logq-concentration.csv")[0]["statistic"])
    return g < 0.01 and s > 0.5, f"Gaussian at 1e3: {g:.5f} (<0.01); StudentLike at 1e6: {s:.4f} (>0.5)"


def ac6(out: Path):
    t = Gaussian(2, 1.0)
    crit = ks_critical_one_sample(10_000)
    res = {}
    for i, k in enumerate((MhKernel.pcn(t), MhKernel.mpcn(t))):
        rng = RngStream(6, i)
        x0 = rng.standard_normal((10_000, 2))
        xs = simulate(k, x0, 100, rng).states
        r2 = np.einsum("ij,ij->i", xs, xs)
        res[k.kind] = float(stats.kstest(r2, stats.chi2(2).cdf).statistic)
    write_json(out / "ac6.json", {"ks": res, "critical": crit})
    return all(v < crit for v in res.values()), (
        f"KS pCN {res['pcn']:.4f}, MpCN {res['mpcn']:.4f} vs crit {crit:.4f}")


def ac7(out: Path):
    _cli("experiment", out, """
        [run]
        seed = 7
        [experiment]
        name = far-start-hitting
        dim = 2
        alpha = 6
        kernels = mpcn, rwm
        rwm_scale = 1
        norms = 1e4, 1e8, 1e16
        radius = 10
        replicas = 50
        budget = 1000000
    """)
    rows = {(r["kernel"], float(r["x0_norm"])): r for r in _rows(out / "hitting.csv")}
    ratio = float(rows[("mpcn", 1e16)]["median_steps"]) / float(rows[("mpcn", 1e4)]["median_steps"])
    rwm_to = int(rows[("rwm", 1e8)]["n_timeout"])
    return 2.5 <= ratio <= 6 and rwm_to == 50, (
        f"MpCN median ratio 1e16/1e4 = {ratio:.3f} (in [2.5, 6]); RWM timeouts from 1e8: {rwm_to}/50")


def ac8(out: Path):
    _cli("experiment", out, """
        [run]
        seed = 8
        [experiment]
        name = dimension-scaling
        dims = 2, 5, 10, 20, 50
        alpha_offset = 4
        kernels = rwm, mpcn
        rwm_scale = auto
        n_steps = 1000000
    """)
    g = _json(out / "summary.json")["iact_growth_factor"]
    return g["rwm"] > g["mpcn"], f"IACT growth d=2->50: RWM {g['rwm']:.1f} > MpCN {g['mpcn']:.2f}"


CRITERIA = {"AC1": (ac1, 10), "AC2": (ac2, 30), "AC3": (ac3, 60), "AC4": (ac4, 5), "AC5": (ac5, 30),
            "AC6": (ac6, 60), "AC7": (ac7, 300), "AC8": (ac8, 600)}


def run_criterion(name, out: Path):
    fn, budget = CRITERIA[name]
    t0 = time.perf_counter()
    ok, detail = fn(out)
    dt = time.perf_counter() - t0
    within = dt < budget
    return ok and within, f"{detail}; {dt:.1f}s (budget {budget}s)"


def _outputs(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.suffix in (".csv", ".json")}


def report(name, ok, detail):
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, flush=True)
    return line


@pytest.fixture(scope="module")
def first_runs(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_first")


@pytest.fixture
def emit(capsys):
    def _emit(name, ok, detail):
        with capsys.disabled():
            print()
            report(name, ok, detail)
    return _emit


@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name, first_runs, emit):
    ok, detail = run_criterion(name, first_runs / name)
    emit(name, ok, detail)
    assert ok, detail


def test_ac9_determinism(first_runs, tmp_path, emit):
    for name in CRITERIA:
        if not (first_runs / name).exists():
            run_criterion(name, first_runs / name)
        run_criterion(name, tmp_path / name)
    a, b = _outputs(first_runs), _outputs(tmp_path)
    diff = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = bool(a) and not diff
    emit("AC9", ok, f"{len(a)} CSV/JSON files compared byte for byte; mismatches: {diff or 'none'}")
    assert ok, diff


if __name__ == "__main__":
    failed = 0
    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        for name in CRITERIA:
            ok, detail = run_criterion(name, Path(d1) / name)
            report(name, ok, detail)
            failed += not ok
        for name in CRITERIA:
            run_criterion(name, Path(d2) / name)
        a, b = _outputs(Path(d1)), _outputs(Path(d2))
        diff = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
        report("AC9", not diff, f"{len(a)} files compared; mismatches: {diff or 'none'}")
        failed += bool(diff)
    sys.exit(1 if failed else 0)
