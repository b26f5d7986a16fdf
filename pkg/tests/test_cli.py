import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from yfs import io
from yfs.cli import main

SMALL = {
    "name": "small_cylinder",
    "experiment": "oracle",
    "dim": 3,
    "T": 1.0,
    "base_profile": "cylinder",
    "grid": {"r_in": 1.0, "r_max": 10.0, "points": 200},
    "solver": {"frac": 0.002},
    "checks": {"t_end": 0.5, "extinction": False, "curvature": True, "tolerance": 1e-3},
    "outputs": {"curvature": True},
}


def write_cfg(tmp_path, cfg, name=None):
    path = tmp_path / f"{name or cfg['name']}.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def test_exponents(capsys):
    assert main(["exponents", "--dim", "3", "--beta", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["model"]["m"] == 0.2 and out["regime"] == "SlowNegativeTail"
    assert out["similarity"]["alpha"] == pytest.approx(8.75)


def test_exponents_bad_dimension(capsys):
    assert main(["exponents", "--dim", "2"]) == 2
    assert "dimension must be ≥ 3" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["profile", "--dim", "3"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["profile", "--kind", "smooth", "--dim", "3", "--points", "0"])
    assert exc.value.code == 2


def test_profile_writes_outputs(tmp_path, capsys):
    code = main(["profile", "--kind", "singular", "--dim", "3", "--beta", "3", "--amp", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    diag = json.loads(capsys.readouterr().out)
    assert diag == io.read_json(tmp_path / "diagnostics.json")
    cols, header = io.read_csv(tmp_path / "profile.csv")
    assert header == ["kind,N,beta,amp", "Singular,3,3.0,1.0"]
    assert cols["r"].size == 4096 and np.all(cols["f"] > 0)


def test_profile_solver_failure_exit_3(capsys):
    assert main(["profile", "--kind", "smooth", "--dim", "3", "--beta", "1.5"]) == 3
    assert "OscillatoryRegime" in capsys.readouterr().err


def test_profile_missing_beta_exit_2(capsys):
    assert main(["profile", "--kind", "smooth", "--dim", "3"]) == 2


def test_phase(tmp_path, capsys):
    assert main(["phase", "--kind", "barenblatt", "--dim", "3", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["start"] == "E" and summary["endpoint"] == "D"
    cols, _ = io.read_csv(tmp_path / "orbit.csv")
    assert set(cols) == {"s", "X", "Y"}


def test_run_and_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    out = tmp_path / "runs"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    run_dir = out / "small_cylinder"
    rep = io.read_json(run_dir / "report.json")
    assert rep["passed"]
    assert {"snapshots.csv", "curvature.csv", "report.json"} <= set(rep["files"])
    for f in rep["files"]:
        assert (run_dir / f).exists()
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "small_cylinder (oracle)" in text and "oracle_error: pass" in text


def test_run_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b")])
    for f in sorted((tmp_path / "a" / "small_cylinder").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / "small_cylinder" / f.name).read_bytes()


def test_failed_check_exit_4(tmp_path, capsys):
    cfg = dict(SMALL, name="strict", checks=dict(SMALL["checks"], tolerance=1e-15))
    path = write_cfg(tmp_path, cfg)
    assert main(["run", str(path), "--out", str(tmp_path / "runs")]) == 4
    assert "failed checks" in capsys.readouterr().err
    assert main(["report", str(tmp_path / "runs" / "strict" / "report.json")]) == 4


def test_invalid_config_exit_2(tmp_path, capsys):
    path = write_cfg(tmp_path, dict(SMALL, dim=2), name="bad")
    assert main(["run", str(path), "--out", str(tmp_path)]) == 2
    assert "invalid config" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_runtime_failure_exit_5(tmp_path, capsys):
    cfg = {"name": "nobarrier", "experiment": "shrinker", "dim": 3, "beta": 3.0, "T": 1.0,
           "base_profile": "smooth", "amp": 0.25, "bound_amp": 0.5,
           "grid": {"points": 100}}
    assert main(["run", str(write_cfg(tmp_path, cfg)), "--out", str(tmp_path)]) == 5
    assert "ConstructionError" in capsys.readouterr().err


def test_report_rejects_invalid(tmp_path, capsys):
    (tmp_path / "report.json").write_text("{}", encoding="utf-8")
    assert main(["report", str(tmp_path)]) == 2


def test_parallel_jobs_match_serial(tmp_path):
    a = write_cfg(tmp_path, SMALL)
    b = write_cfg(tmp_path, dict(SMALL, name="second"))
    assert main(["run", str(a), str(b), "--out", str(tmp_path / "par"), "--jobs", "2"]) == 0
    assert main(["run", str(a), "--out", str(tmp_path / "ser")]) == 0
    par = (tmp_path / "par" / "small_cylinder" / "report.json").read_bytes()
    assert par == (tmp_path / "ser" / "small_cylinder" / "report.json").read_bytes()


@pytest.mark.skipif(shutil.which("yfs") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["yfs", "exponents", "--dim", "6"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["model"]["cStar"] == 4.0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "yfs.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("yfs ")
