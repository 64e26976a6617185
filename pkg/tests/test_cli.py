import csv
import json
import subprocess
import sys
import textwrap

import pytest

from mpcnkit import cli, experiments
from mpcnkit.config import parse_config_text

MINIMAL = """
[target]
family = gaussian
dim = 2
sigma = 1
[kernel]
kind = pcn
[run]
n_steps = 1000
x0 = 0.5, -0.5
seed = 11
"""


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_sample_minimal(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert _run("sample", "--config", cfg, "--out", tmp_path / "o") == 0
    out = tmp_path / "o"
    for name in ("trace.csv", "trace.meta.json", "summary.csv", "run.log"):
        assert (out / name).exists()
    rows = _rows(out / "summary.csv")
    assert {r["functional"] for r in rows} >= {"log1p_sq_norm", "log_sq_norm"}
    assert float(rows[0]["acceptance_rate"]) == 1.0
    assert len({r["config_hash"] for r in rows}) == 1
    assert json.loads((out / "trace.meta.json").read_text())["n_states"] == 900


def test_sample_rerun_identical(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    _run("sample", "--config", cfg, "--out", tmp_path / "a")
    _run("sample", "--config", cfg, "--out", tmp_path / "b")
    for name in ("summary.csv", "trace.csv", "trace.meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_flag_overrides(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    _run("sample", "--config", cfg, "--out", tmp_path / "a")
    _run("sample", "--config", cfg, "--out", tmp_path / "b", "--seed", 12)
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "b" / "trace.csv").read_bytes()
    meta = json.loads((tmp_path / "b" / "trace.meta.json").read_text())
    assert meta["seed"] == 12


def test_multi_chain_workers(tmp_path):
    cfg = _write(tmp_path, MINIMAL.replace("seed = 11", "seed = 11\nchains = 3"))
    _run("sample", "--config", cfg, "--out", tmp_path / "a", "--workers", 1)
    _run("sample", "--config", cfg, "--out", tmp_path / "b", "--workers", 3)
    for name in ("summary.csv", "trace_002.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_field_names_it(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL.replace("n_steps = 1000\n", ""))
    assert _run("sample", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "run.n_steps" in capsys.readouterr().err


def test_bad_value_names_field(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL.replace("dim = 2", "dim = two"))
    assert _run("sample", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "target.dim" in capsys.readouterr().err


def test_mpcn_origin_is_config_error(tmp_path):
    cfg = _write(tmp_path, MINIMAL.replace("kind = pcn", "kind = mpcn").replace("x0 = 0.5, -0.5", "x0 = 0, 0"))
    assert _run("sample", "--config", cfg, "--out", tmp_path / "o") == 2


def test_usage_errors(tmp_path):
    assert _run("sample") == 2
    assert _run("bogus", "--config", "x", "--out", "y") == 2
    assert _run("sample", "--config", tmp_path / "missing.ini", "--out", tmp_path / "o") == 2
    cfg = _write(tmp_path, MINIMAL)
    assert _run("sample", "--config", cfg, "--out", tmp_path / "o", "--workers", 0) == 2


def test_runtime_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise FloatingPointError("overflow in test")

    monkeypatch.setitem(cli._COMMANDS, "sample", boom)
    assert _run("sample", "--config", _write(tmp_path, MINIMAL), "--out", tmp_path / "o") == 3


STUDENT = """
[target]
family = student
dim = 2
alpha = 6
[kernel]
kind = mpcn
rho = 0.8
[run]
seed = 5
"""


def test_diagnose_unknown_lists_names(tmp_path, capsys):
    cfg = _write(tmp_path, STUDENT + "[diagnostic]\nname = wobble\n")
    assert _run("diagnose", "--config", cfg, "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    for name in experiments.DIAGNOSTICS:
        assert name in err


def test_diagnose_rwm_property_default(tmp_path):
    cfg = _write(tmp_path, STUDENT + "[diagnostic]\nname = rwm-property\n")
    assert _run("diagnose", "--config", cfg, "--out", tmp_path / "o") == 0
    rep = json.loads((tmp_path / "o" / "rwm-property_00.json").read_text())
    assert rep["verdict"] == "ConsistentWithGeometric"
    assert rep["details"]["state_norms"] == pytest.approx([1.0, 1e6, 1e-6])


def test_diagnose_cr_monotone(tmp_path):
    cfg = _write(tmp_path, STUDENT + "[diagnostic]\nname = cr\nr_grid = 1e2, 1e4, 1e6\n")
    assert _run("diagnose", "--config", cfg, "--out", tmp_path / "o") == 0
    vals = [float(r["statistic"]) for r in _rows(tmp_path / "o" / "cr.csv")]
    assert len(vals) == 3 and vals[0] > vals[1] > vals[2]
    assert len(list((tmp_path / "o").glob("cr_*.json"))) == 3


def test_diagnose_drift_bad_s(tmp_path, capsys):
    cfg = _write(tmp_path, STUDENT + "[diagnostic]\nname = drift-ratio\ns = 1.5\n")
    assert _run("diagnose", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "diagnostic.s" in capsys.readouterr().err


def test_diagnose_name_flag(tmp_path):
    cfg = _write(tmp_path, STUDENT + "[diagnostic]\nname = cr\n")
    assert _run("diagnose", "--config", cfg, "--out", tmp_path / "o", "--name", "moment") == 0
    assert (tmp_path / "o" / "moment.csv").exists()


def test_experiment_unknown(tmp_path):
    cfg = _write(tmp_path, "[experiment]\nname = nope\n")
    assert _run("experiment", "--config", cfg, "--out", tmp_path / "o") == 2


def test_experiment_necessary_conditions_student(tmp_path):
    cfg = _write(tmp_path, "[experiment]\nname = necessary-conditions\ntargets = student:alpha=6\n")
    assert _run("experiment", "--config", cfg, "--out", tmp_path / "o") == 0
    out = tmp_path / "o"
    verdicts = {r["kernel"]: r["verdict"] for r in _rows(out / "verdicts.csv")}
    assert verdicts == {"rwm": "ConsistentWithNonGeometric", "pcn": "ConsistentWithNonGeometric",
                        "mpcn": "ConsistentWithGeometric"}
    for name in ("cr.csv", "rejection.csv", "moments.csv", "summary.json"):
        assert (out / name).exists()


def test_experiment_far_start_small(tmp_path):
    cfg = _write(tmp_path, """
        [experiment]
        name = far-start-hitting
        norms = 1e4, 1e8
        replicas = 10
        budget = 20000
    """)
    assert _run("experiment", "--config", cfg, "--out", tmp_path / "o", "--workers", 2) == 0
    rows = _rows(tmp_path / "o" / "hitting.csv")
    rwm = [r for r in rows if r["kernel"] == "rwm"]
    assert all(r["median_is_timeout"] == "true" for r in rwm)
    mp = [float(r["median_steps"]) for r in rows if r["kernel"] == "mpcn"]
    assert mp[0] < mp[1]
    assert len(_rows(tmp_path / "o" / "hitting_replicas.csv")) == 40


def test_experiment_heavy_tail_and_scaling_small(tmp_path):
    cfg = _write(tmp_path, "[experiment]\nname = heavy-tail-comparison\nn_steps = 20000\n")
    assert _run("experiment", "--config", cfg, "--out", tmp_path / "h") == 0
    rows = _rows(tmp_path / "h" / "ess.csv")
    assert [r["kernel"] for r in rows] == ["rwm", "pcn", "mpcn"]
    assert float(rows[0]["truth"]) == pytest.approx(0.5)
    cfg = _write(tmp_path, "[experiment]\nname = dimension-scaling\ndims = 2, 10\nn_steps = 20000\n", "d.ini")
    assert _run("experiment", "--config", cfg, "--out", tmp_path / "d") == 0
    summary = json.loads((tmp_path / "d" / "summary.json").read_text())
    assert set(summary["iact_growth_factor"]) == {"rwm", "mpcn"}


def test_config_hash_stable_and_sensitive():
    a = parse_config_text(MINIMAL)
    b = parse_config_text(MINIMAL.replace("[run]", "[run]\n; a comment"))
    assert a.hash() == b.hash()
    b.set_override("run", "seed", 12)
    assert a.hash() != b.hash()


def test_console_entry_point(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    proc = subprocess.run([sys.executable, "-m", "mpcnkit.cli", "sample", "--config", str(cfg), "--out",
                           str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
