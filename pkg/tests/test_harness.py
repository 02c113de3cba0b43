import math

import numpy as np
import pytest

from mfris import harness
from mfris.analysis import example_params, optimal_elements_mf
from mfris.harness import (CSV_HEADER, SisoSpec, SweepSpec, csv_text, emit_csv, point_config,
                           read_csv, run_sweep, scheme_config, summarize, trial_seed)
from mfris.scenario import ConfigError, UncertaintyParams, dbm_to_watts, default_config


def example_config():
    ex = example_params()
    cfg = default_config(P_BS_max=ex.P_BS_max, M=ex.M, sigma0_sq=ex.sigma0_sq, sigma1_sq=ex.sigma1_sq,
                        beta_max=ex.beta_max, energy=ex.energy)
    return cfg, SisoSpec(-45.0, -60.0, ex.sumPA)


def tiny_config(**kw):
    return default_config(N=1, K=1, M=2, uncertainty=UncertaintyParams.perfect(), **kw)


@pytest.mark.parametrize("kw,msg", [
    (dict(variable="M", values=()), "nonempty"),
    (dict(variable="M", values=(4,), trials=0), "trials"),
    (dict(variable="X", values=(1,)), "sweep variable"),
    (dict(variable="M", values=(4,), schemes=("magic",)), "schemes"),
    (dict(variable="M", values=(4,), schemes=()), "schemes"),
    (dict(variable="M", values=(4,), csi="partial"), "csi"),
    (dict(variable="M_A", values=(1,), schemes=("no-ris",)), "closed-form"),
    (dict(variable="M_A", values=(1.5,), schemes=("mf-ris",)), "integers"),
    (dict(variable="M", values=(float("nan"),)), "finite"),
])
def test_spec_validation(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        SweepSpec(**kw)


def test_spec_from_dict_overrides():
    spec = SweepSpec.from_dict({"variable": "M", "values": [2, 4], "trials": 3,
                                "siso": {"h_sq_dB": -40}}, trials=1, csi=None)
    assert spec.trials == 1 and spec.values == (2.0, 4.0) and spec.csi == "perfect"
    assert spec.siso.h_sq_dB == -40
    with pytest.raises(ConfigError):
        SweepSpec.from_dict({"trials": 2})


def test_trial_seeds():
    assert trial_seed(5, 0) == trial_seed(5, 0)
    assert len({trial_seed(5, t) for t in range(50)}) == 50
    assert trial_seed(5, 1) != trial_seed(6, 1)


def test_point_configs():
    cfg = default_config()
    assert point_config(cfg, "M", 12).M == 12
    assert point_config(cfg, "ris_position_Y", 25.0).geometry.ris[1] == 25.0
    assert math.isclose(point_config(cfg, "P_BS_max", 30.0).P_BS_max, 1.0)
    tp = point_config(cfg, "total_power", 30.0)
    assert math.isclose(scheme_config(tp, "reflecting-only", "total_power").P_BS_max, 1.0 - 8 * 1.5e-3)
    assert scheme_config(tp, "mf-ris", "total_power") is tp
    assert scheme_config(point_config(cfg, "total_power", 0.0), "reflecting-only", "total_power") is None


def test_siso_sweep_rows_and_peak():
    cfg, siso = example_config()
    grid = tuple(range(0, 31))
    rows = run_sweep(cfg, SweepSpec("M_A", grid, 1, ("mf-ris", "self-sustainable"), siso=siso))
    assert len(rows) == 2 * len(grid)
    assert [r.scheme for r in rows[:4]] == ["mf-ris", "self-sustainable"] * 2
    mf = summarize(rows, "mf-ris")
    peak = max(grid, key=lambda m: mf[("mf-ris", float(m))])
    assert peak == optimal_elements_mf(example_params())
    assert all(r.metric == "snr_db" for r in rows)


def test_row_count_and_header(tmp_path):
    cfg, siso = example_config()
    rows = run_sweep(cfg, SweepSpec("M_A", (1, 5, 9), 2, ("mf-ris", "self-sustainable"), siso=siso))
    path = emit_csv(rows, tmp_path / "out.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 13
    rec = read_csv(path)
    assert [(r["swept_value"], r["trial"], r["scheme"]) for r in rec[:4]] == [
        ("1", "0", "mf-ris"), ("1", "0", "self-sustainable"), ("1", "1", "mf-ris"), ("1", "1", "self-sustainable")]
    # 9 significant digits, wall time left out for reproducibility
    v = rec[0]["value"]
    assert len(v.replace(".", "").replace("-", "").lstrip("0")) <= 9
    assert rec[0]["wall_ms"] == ""


def test_trials_of_a_deterministic_point_agree():
    cfg, siso = example_config()
    rows = run_sweep(cfg, SweepSpec("M_A", (10,), 2, ("mf-ris",), siso=siso))
    a, b = rows
    assert (a.trial, b.trial) == (0, 1)
    assert (a.value, a.status, a.metric) == (b.value, b.status, b.metric)


def test_empty_table_writes_nothing(tmp_path):
    path = tmp_path / "none.csv"
    with pytest.raises(ValueError):
        emit_csv([], path)
    assert not path.exists()


def test_io_error_names_path(tmp_path):
    cfg, siso = example_config()
    rows = run_sweep(cfg, SweepSpec("M_A", (1,), 1, ("mf-ris",), siso=siso))
    bad = tmp_path / "missing-dir" / "out.csv"
    with pytest.raises(OSError, match="missing-dir"):
        emit_csv(rows, bad)


def test_timing_column_optional():
    cfg, siso = example_config()
    rows = run_sweep(cfg, SweepSpec("M_A", (1,), 1, ("mf-ris",), siso=siso))
    last = csv_text(rows, timing=True).splitlines()[1].split(",")[-1]
    assert float(last) >= 0


def test_miso_sweep_ordering_and_determinism():
    cfg = tiny_config()
    spec = SweepSpec("P_BS_max", (30.0, 40.0), 1,
                     ("mf-ris", "self-sustainable", "reflecting-only", "no-ris"), "perfect", max_outer=3)
    rows = run_sweep(cfg, spec)
    assert len(rows) == 8 and all(r.status == "ok" for r in rows)
    for value in (30.0, 40.0):
        by = {r.scheme: r.value for r in rows if r.swept_value == value}
        for s in ("mf-ris", "self-sustainable", "reflecting-only"):
            assert by[s] >= by["no-ris"] - 1e-6
    assert csv_text(run_sweep(cfg, spec)) == csv_text(rows)


def test_non_robust_scheme_evaluated_on_true_channels():
    k = math.sqrt(0.05)
    cfg = default_config(N=2, K=1, M=2, uncertainty=UncertaintyParams(k, k, k))
    rows = run_sweep(cfg, SweepSpec("P_BS_max", (36.0,), 1, ("non-robust", "mf-ris"), "perfect", max_outer=2))
    assert [r.metric for r in rows] == ["sum_rate", "sum_rate"]
    assert all(np.isfinite(r.value) for r in rows)


def test_failures_are_recorded(monkeypatch):
    real = harness._run_miso

    def flaky(inst, scheme, *a):
        if scheme == "self-sustainable":
            raise RuntimeError("solver exploded")
        return real(inst, scheme, *a)

    monkeypatch.setattr(harness, "_run_miso", flaky)
    rows = run_sweep(tiny_config(), SweepSpec("M", (2,), 1, ("no-ris", "self-sustainable"), max_outer=2))
    status = {r.scheme: r.status for r in rows}
    assert status == {"no-ris": "ok", "self-sustainable": "failed:RuntimeError"}
    assert rows[1].failed and math.isnan(rows[1].value)


def test_reflecting_only_total_power_below_budget_is_infeasible():
    rows = run_sweep(tiny_config(), SweepSpec("total_power", (0.0,), 1, ("reflecting-only",)))
    assert rows[0].status == "infeasible"


def test_worker_pool_matches_serial():
    cfg, siso = example_config()
    spec = SweepSpec("M_A", (1, 2, 3), 2, ("mf-ris", "self-sustainable"), siso=siso)
    par = SweepSpec("M_A", (1, 2, 3), 2, ("mf-ris", "self-sustainable"), siso=siso, workers=2)
    assert csv_text(run_sweep(cfg, spec)) == csv_text(run_sweep(cfg, par))
