import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfris.scenario import (SCHEMA_VERSION, ConfigError, ScenarioConfig, UncertaintyParams,
                            config_from_dict, config_to_dict, db_convert, dbm_to_watts,
                            load_config, omega_of, default_config, validate, watts_to_dbm)


def test_defaults_match_table():
    cfg = default_config()
    assert (cfg.N, cfg.K, cfg.M) == (4, 3, 8)
    assert math.isclose(cfg.P_BS_max, 10 ** 0.6, rel_tol=1e-12)        # 36 dBm
    assert math.isclose(cfg.sigma0_sq, 1e-10, rel_tol=1e-12)            # -70 dBm
    assert math.isclose(cfg.beta_max, 10 ** 1.6, rel_tol=1e-12)         # 16 dB
    e = cfg.energy
    assert (e.Z, e.a, e.q) == (24e-3, 150.0, 0.014)
    assert math.isclose(e.Omega, 1 / (1 + math.exp(150 * 0.014)), rel_tol=1e-12)


@pytest.mark.parametrize("value,direction,expected", [
    (30.0, "dbm->watts", 1.0),
    (0.0, "dbm->watts", 1e-3),
    (10.0, "db->linear", 10.0),
    (1.0, "watts->dbm", 30.0),
    (100.0, "linear->db", 20.0),
])
def test_db_convert(value, direction, expected):
    assert math.isclose(float(db_convert(value, direction)), expected, rel_tol=1e-12)


def test_db_convert_rejects_unknown_direction():
    with pytest.raises(ValueError):
        db_convert(1.0, "db->furlongs")


@given(st.floats(-150, 80))
def test_dbm_roundtrip(x):
    assert math.isclose(float(watts_to_dbm(dbm_to_watts(x))), x, rel_tol=0, abs_tol=1e-9)


def test_omega_is_logistic_at_zero_input():
    assert math.isclose(omega_of(150.0, 0.014), 1 / (1 + math.exp(2.1)), rel_tol=1e-14)
    # no overflow for large a*q
    assert 0 <= omega_of(1e4, 1.0) < 1e-300


def test_validate_lists_every_problem():
    bad = ScenarioConfig(N=0, K=-1, sigma0_sq=-1.0, beta_max=0.5)
    with pytest.raises(ConfigError) as err:
        validate(bad)
    text = "\n".join(err.value.problems)
    for key in ("N >= 1", "K >= 1", "sigma0_sq", "beta_max"):
        assert key in text


def test_negative_uncertainty_rejected():
    with pytest.raises(ConfigError):
        default_config(uncertainty=UncertaintyParams(-0.1, 0.0, 0.0))


def test_json_roundtrip():
    cfg = default_config(M=12, rng_seed=7)
    doc = config_to_dict(cfg, {"variable": "M", "values": [4, 8], "trials": 2})
    back, sweep = config_from_dict(json.loads(json.dumps(doc)))
    assert back.M == 12 and back.rng_seed == 7
    assert math.isclose(back.P_BS_max, cfg.P_BS_max, rel_tol=1e-12)
    assert math.isclose(back.uncertainty.kappa_h, cfg.uncertainty.kappa_h, rel_tol=1e-12)
    assert np.allclose(back.geometry.ris, cfg.geometry.ris)
    assert sweep["values"] == [4, 8]


def test_schema_version_mandatory():
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict({"system": {"N": 2}})
    with pytest.raises(ConfigError, match="expected"):
        config_from_dict({"schema_version": "0.0"})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": SCHEMA_VERSION, "system": {"antennas": 4}})


def test_load_config_reports_path(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="broken.json"):
        load_config(p)
    with pytest.raises(ConfigError, match="missing.json"):
        load_config(tmp_path / "missing.json")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(1, 8), st.integers(0, 64), st.floats(0, 50))
def test_valid_configs_roundtrip(N, K, M, p_dbm):
    cfg = default_config(N=N, K=K, M=M, P_BS_max=float(dbm_to_watts(p_dbm)))
    back, _ = config_from_dict(config_to_dict(cfg))
    assert (back.N, back.K, back.M) == (N, K, M)
    assert math.isclose(back.P_BS_max, cfg.P_BS_max, rel_tol=1e-9)
