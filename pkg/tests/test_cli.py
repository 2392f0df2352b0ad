import json
import subprocess
import sys

import numpy as np
import pytest

from circdd.assembly import import_matrix, import_vector
from circdd.cli import RunConfig, main, run
from circdd.errors import ConfigurationError

SMALL = dict(domain=[-20.0, 20.0, -20.0, 20.0], m_per_side=4, n_paths=50, h=0.05, parts=4)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    cfg = RunConfig(problem="harmonic_xy", out=str(out), **SMALL)
    return run(cfg)


def test_artifacts(small_run):
    out = small_run.out_dir
    for name in ("system.mtx", "rhs.txt", "solution.txt", "knots.csv", "errors.csv",
                 "mc_rows.csv", "residuals.csv", "stats.json"):
        assert (out / name).is_file(), name
    c = import_matrix(out / "system.mtx")
    assert (c != small_run.system.matrix).nnz == 0
    assert np.array_equal(import_vector(out / "solution.txt"), small_run.report.solution)
    stats = json.loads((out / "stats.json").read_text())["stats"]
    assert stats["n"] == small_run.cover.n_knots == 504
    assert stats["gmres_converged"] and stats["final_residual"] <= 1e-10
    assert set(stats["rows"]) == {"spectral", "monte_carlo", "boundary_identity"}
    assert sum(stats["rows"].values()) == stats["n"]
    assert {"cover", "assembly", "preconditioner", "gmres", "total"} <= set(stats["timings"])


def test_small_run_accuracy(small_run):
    # Monte Carlo noise at 50 paths dominates; x*y spans [-400, 400] on this domain
    assert small_run.stats.rms_error < 0.05 * 400
    assert small_run.report.true_residual <= 1e-9


def test_constant_problem_is_exact(tmp_path):
    cfg = RunConfig(problem="constant", out=str(tmp_path), **{**SMALL, "n_paths": 1000})
    res = run(cfg, write=False)
    # every trajectory carries unit coefficient mass, so u = 1 solves C u = r exactly
    # remaining error: spectral row sums and the GMRES tolerance
    assert res.stats.rms_error <= 1e-6


def test_config_round_trip(tmp_path):
    cfg = RunConfig(problem={"a_xx": "2", "a_yy": "2", "g": "x"}, seed=7)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(path) == cfg
    assert RunConfig().n_paths == 5000 and RunConfig().h == 0.015


@pytest.mark.parametrize("data, match", [
    ({"n_pahts": 10}, "unknown configuration keys: n_pahts"),
    ({"mode": "fancy"}, "mode"),
    ({"tol": 2.0}, "tol"),
    ({"domain": [0, 1]}, "domain"),
])
def test_config_errors(data, match):
    with pytest.raises(ConfigurationError, match=match):
        RunConfig.from_dict(data)


def _write(tmp_path, **data):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**SMALL, "out": str(tmp_path / "out"), **data}))
    return str(path)


def test_bad_rho_exits_nonzero(tmp_path, capsys):
    assert main(["solve", "--config", _write(tmp_path, rho=0.5)]) == 2
    assert "covers the plane only for rho > 1/sqrt(2)" in capsys.readouterr().err


def test_unknown_key_exits_nonzero(tmp_path, capsys):
    assert main(["solve", "--config", _write(tmp_path, colour="red")]) == 2
    assert "unknown configuration keys" in capsys.readouterr().err


def test_seed_from_environment(tmp_path, monkeypatch):
    path = _write(tmp_path, problem="harmonic_xy", n_paths=10, parts=1)
    monkeypatch.setenv("CIRCDD_SEED", "99")
    assert main(["solve", "--config", path]) == 0
    stats = json.loads((tmp_path / "out" / "stats.json").read_text())
    assert stats["config"]["seed"] == 99
    monkeypatch.setenv("CIRCDD_SEED", "abc")
    assert main(["solve", "--config", path]) == 2


def test_inspect_command(small_run, capsys):
    assert main(["inspect", "--matrix", str(small_run.out_dir / "system.mtx"),
                 "--no-condition"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n"] == 504 and info["condition_2"] is None


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "circdd.cli", "inspect", "--matrix",
                           str(tmp_path / "missing.mtx")], capture_output=True, text=True)
    assert proc.returncode == 2 and "cannot read matrix" in proc.stderr
