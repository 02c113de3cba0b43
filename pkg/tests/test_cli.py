import json
import subprocess
import sys

import pytest

from mfris import harness
from mfris.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from mfris.harness import CSV_HEADER
from mfris.scenario import SCHEMA_VERSION


def write_config(tmp_path, sweep=None, **system):
    doc = {"schema_version": SCHEMA_VERSION, "seed": 3,
           "system": {"N": 1, "K": 1, "M": 2, **system},
           "uncertainty": {"kappa_h_sq": 0.0, "kappa_g_sq": 0.0, "kappa_H_sq": 0.0}}
    if sweep is not None:
        doc["sweep"] = sweep
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_analyze_default_example(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["analyze", "--out", str(out), "--points", "0,10,20"]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 7
    mf10 = [l for l in lines if l.startswith("mf-ris,perfect,M_A,10,")][0]
    assert abs(float(mf10.split(",")[7]) - 33.2) < 1e-6


def test_sweep_siso_from_config(tmp_path, capsys):
    cfg = write_config(tmp_path, {"variable": "M_A", "values": [1, 2], "trials": 1,
                                  "schemes": ["mf-ris"], "siso": {"sumPA_W": 0.01}}, M=20)
    assert main(["sweep", "--config", str(cfg)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 3


def test_sweep_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, {"variable": "P_BS_max", "values": [30, 36], "trials": 2,
                                  "schemes": ["mf-ris", "no-ris"], "max_outer": 2})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["sweep", "--config", str(cfg), "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 1 + 2 * 2 * 2


def test_flags_override_config(tmp_path):
    cfg = write_config(tmp_path, {"variable": "P_BS_max", "values": [30, 36], "trials": 2,
                                  "schemes": ["mf-ris", "no-ris"], "max_outer": 2})
    out = tmp_path / "o.csv"
    assert main(["sweep", "--config", str(cfg), "--points", "33", "--trials", "1",
                 "--scheme", "no-ris", "--seed", "9", "--out", str(out)]) == EXIT_OK
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 1 and rows[0].startswith("no-ris,perfect,P_BS_max,33,0,")


def test_optimize_single_point(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o.csv"
    assert main(["optimize", "--config", str(cfg), "--scheme", "mf-ris,no-ris", "--out", str(out)]) == EXIT_OK
    rows = out.read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["mf-ris", "no-ris"]


@pytest.mark.parametrize("args", [
    ["sweep", "--config", "/nonexistent/cfg.json"],
    ["optimize", "--config", "/nonexistent/cfg.json"],
])
def test_missing_config_exit_1(args, capsys):
    assert main(args) == EXIT_CONFIG
    assert "nonexistent" in capsys.readouterr().err


def test_invalid_config_exit_1(tmp_path):
    cfg = write_config(tmp_path, {"variable": "M", "values": [2], "trials": 0})
    assert main(["sweep", "--config", str(cfg)]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "system": {"N": 0}}))
    assert main(["optimize", "--config", str(bad)]) == EXIT_CONFIG
    cfg = write_config(tmp_path)
    assert main(["sweep", "--config", str(cfg)]) == EXIT_CONFIG          # no sweep section


def test_partial_failure_exit_2(tmp_path, monkeypatch):
    real = harness._run_miso

    def flaky(inst, scheme, *a):
        if scheme == "no-ris":
            raise RuntimeError("boom")
        return real(inst, scheme, *a)

    monkeypatch.setattr(harness, "_run_miso", flaky)
    cfg = write_config(tmp_path, {"variable": "P_BS_max", "values": [30], "trials": 1,
                                  "schemes": ["reflecting-only", "no-ris"], "max_outer": 2})
    out = tmp_path / "o.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_PARTIAL
    assert "failed:RuntimeError" in out.read_text()


def test_validate_command(tmp_path):
    doc = {"schema_version": SCHEMA_VERSION, "seed": 1, "system": {"N": 2, "K": 1, "M": 2},
           "uncertainty": {"kappa_h_sq": 0.01, "kappa_g_sq": 0.01, "kappa_H_sq": 0.01}}
    cfg = tmp_path / "v.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "viol.csv"
    assert main(["validate", "--config", str(cfg), "--samples", "100", "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines() == ["draw,constraint,violation"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mfris", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("analyze", "optimize", "robust", "sweep", "validate"):
        assert cmd in res.stdout
