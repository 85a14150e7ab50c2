import json
import shutil
import subprocess

import pytest

from radial_sle.cli import EXIT_INVALID, EXIT_OK, EXIT_TOLERANCE, MANIFEST_SCHEMA, dispatch


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_params_writes_manifest(tmp_path, capsys):
    code = dispatch(["params", "--kappa", "4", "--sigma", "0.5,1", "--out", str(tmp_path), "--seed", "1"])
    assert code == EXIT_OK
    m = _manifest(tmp_path)
    assert m["schema_id"] == MANIFEST_SCHEMA
    assert m["command"] == "params"
    assert m["options"]["kappa"] == 4.0
    assert m["result"]["b"] == 0.0
    assert len(m["result"]["dimensions"]) == 2
    assert json.loads(capsys.readouterr().out)["fugacity"] == pytest.approx(2.0)


def test_patterns_prints_canonical_text(tmp_path, capsys):
    assert dispatch(["patterns", "--n", "4", "--m", "1", "--out", str(tmp_path)]) == EXIT_OK
    lines = capsys.readouterr().out.split()
    assert len(lines) == 4
    assert all(line.startswith("radial:4:") for line in lines)


def test_meander_invertibility_exit_code(tmp_path):
    ok = dispatch(["meander", "--n", "4", "--m", "2", "--kappa", "3.9", "--check-invertible", "--out", str(tmp_path)])
    assert ok == EXIT_OK
    # nu = 0 at kappa = 8/3 makes the n = 4, m = 2 matrix singular
    bad = dispatch(["meander", "--n", "4", "--m", "2", "--kappa", str(8 / 3), "--check-invertible", "--out", str(tmp_path)])
    assert bad == EXIT_TOLERANCE


def test_verify_nullvec_closed_form(tmp_path):
    code = dispatch(["verify", "nullvec", "--kappa", "3", "--n", "3", "--seed", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    res = _manifest(tmp_path)["result"]
    assert res["h"] == pytest.approx(-4 / 3, abs=1e-6)
    assert res["pass"]


def test_verify_rotation_spin(tmp_path):
    code = dispatch(["verify", "rotation", "--family", "spin", "--n", "1", "--kappa", "2", "--eta", "0.5",
                     "--samples", "3", "--seed", "0", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert _manifest(tmp_path)["result"]["omega"] == pytest.approx(0.25, abs=1e-8)


def test_tolerance_miss_exits_three(tmp_path):
    code = dispatch(["verify", "nullvec", "--kappa", "3", "--n", "2", "--step", "0.2", "--tol", "1e-14",
                     "--seed", "2", "--out", str(tmp_path)])
    assert code == EXIT_TOLERANCE
    assert _manifest(tmp_path)["exit_code"] == EXIT_TOLERANCE


def test_missing_required_option(tmp_path, capsys):
    assert dispatch(["params", "--out", str(tmp_path)]) == EXIT_INVALID
    assert "--kappa" in capsys.readouterr().err


def test_bad_config_reports_line(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n "kappa": 3,\n "bogus": 1\n}\n')
    assert dispatch(["params", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_INVALID
    assert f"{cfg}:3:" in capsys.readouterr().err
    cfg.write_text('{\n "kappa": 3,\n}\n')
    assert dispatch(["params", "--config", str(cfg)]) == EXIT_INVALID
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kappa": 3.0, "sigma": [1.0]}))
    assert dispatch(["params", "--config", str(cfg), "--kappa", "6", "--out", str(tmp_path)]) == EXIT_OK
    m = _manifest(tmp_path)
    assert m["options"]["kappa"] == 6.0
    assert m["options"]["sigma"] == [1.0]


def test_simulate_rerun_from_manifest_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--n", "2", "--kappa", "3", "--T", "0.01", "--dt", "1e-3", "--n-tips", "4"]
    assert dispatch(args + ["--out", str(a)]) == EXIT_OK
    assert dispatch(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
    assert (a / "sim_traces.csv").read_bytes() == (b / "sim_traces.csv").read_bytes()
    assert _manifest(a)["options"]["seed"] == _manifest(b)["options"]["seed"]


def test_simulate_ensemble(tmp_path):
    code = dispatch(["simulate", "--n", "1", "--kappa", "2", "--T", "0.01", "--dt", "1e-3", "--ensemble", "2",
                     "--seed", "3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "sim_0001_traces.csv").exists()
    assert (tmp_path / "sim_0000_diagnostics.json").exists()


def test_simulate_invalid_config(tmp_path):
    code = dispatch(["simulate", "--n", "2", "--kappa", "3", "--theta0", "0,0.001", "--out", str(tmp_path)])
    assert code == EXIT_INVALID


def test_calibrate_fd_order(tmp_path):
    assert dispatch(["calibrate", "fd-order", "--seed", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert _manifest(tmp_path)["result"]["ratio"] == pytest.approx(16.0, rel=0.1)


@pytest.mark.skipif(shutil.which("radial-sle") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["radial-sle", "params", "--kappa", "2", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["kappa"] == 2.0
