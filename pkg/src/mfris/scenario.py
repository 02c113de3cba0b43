"""Scenario configuration, unit conversion and validation.

Everything inside the package works in linear SI units (watts, meters,
linear ratios).  Decibel quantities only appear in the JSON config files
and are converted once, here.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

SCHEMA_VERSION = "1.0"


class ConfigError(ValueError):
    """Raised with every violated invariant listed, one per line."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


# ---------------------------------------------------------------- units

def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_watts(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float)) + 30.0


_CONVERTERS = {
    "db->linear": db_to_linear,
    "linear->db": linear_to_db,
    "dbm->watts": dbm_to_watts,
    "watts->dbm": watts_to_dbm,
}


def db_convert(value, direction="db->linear"):
    """Convert between dB/dBm and linear ratios/watts.

    direction is one of 'db->linear', 'linear->db', 'dbm->watts', 'watts->dbm'.
    Scalars come back as floats, arrays as arrays.
    """
    try:
        fn = _CONVERTERS[direction]
    except KeyError:
        raise ValueError(f"unknown conversion {direction!r}; expected one of {sorted(_CONVERTERS)}")
    out = fn(value)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- types

def omega_of(a, q):
    # 1/(1+e^{aq}) written through expit-like form to stay accurate for large aq
    aq = a * q
    if aq > 0:
        e = math.exp(-aq)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(aq))


@dataclass(frozen=True)
class EnergyParams:
    Z: float = 24e-3          # saturation of the harvester, W
    a: float = 150.0          # steepness, 1/W
    q: float = 0.014          # turn-on threshold, W
    xi: float = 1.1           # inverse amplifier efficiency
    P_b: float = 1.5e-3       # phase shifter, W
    P_DC: float = 0.3e-3      # amplifier DC bias, W
    P_C: float = 2.1e-6       # RF-to-DC circuit, W
    Omega: float | None = None

    def __post_init__(self):
        if self.Omega is None and self.a > 0 and self.q > 0:
            object.__setattr__(self, "Omega", omega_of(self.a, self.q))


@dataclass(frozen=True)
class UncertaintyParams:
    kappa_h: float = math.sqrt(0.1)
    kappa_g: float = math.sqrt(0.1)
    kappa_H: float = math.sqrt(0.1)

    @classmethod
    def perfect(cls):
        return cls(0.0, 0.0, 0.0)

    @property
    def is_perfect(self):
        return self.kappa_h == 0 and self.kappa_g == 0 and self.kappa_H == 0


@dataclass(frozen=True)
class Geometry:
    bs: tuple = (5.0, 0.0, 5.0)
    ris: tuple = (0.0, 5.0, 10.0)
    user_center: tuple = (5.0, 40.0, 0.0)
    user_radius: float = 4.0
    ref_loss_db: float = -20.0
    # path-loss exponents per link class
    exp_bs_ris: float = 2.2
    exp_bs_user: float = 2.8
    exp_ris_user: float = 2.6
    # Rician factors, linear
    rician_bs_ris: float = float(db_to_linear(3.0))
    rician_bs_user: float = float(db_to_linear(3.0))
    rician_ris_user: float = float(db_to_linear(3.0))
    spacing: float = 0.5      # element spacing in wavelengths


@dataclass(frozen=True)
class ScenarioConfig:
    N: int = 4
    K: int = 3
    M: int = 8
    P_BS_max: float = float(dbm_to_watts(36.0))
    sigma0_sq: float = float(dbm_to_watts(-70.0))
    sigma1_sq: float = float(dbm_to_watts(-70.0))
    beta_max: float = float(db_to_linear(16.0))
    geometry: Geometry = field(default_factory=Geometry)
    energy: EnergyParams = field(default_factory=EnergyParams)
    uncertainty: UncertaintyParams = field(default_factory=UncertaintyParams)
    rng_seed: int = 0

    def with_(self, **kw):
        return replace(self, **kw)


def default_config(**overrides) -> ScenarioConfig:
    """Default simulation scenario, optionally with fields replaced."""
    return validate(ScenarioConfig(**overrides))


# ---------------------------------------------------------------- validation

def _positive(name, v, out):
    if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
        out.append(f"{name} > 0 (got {v!r})")


def validate(config: ScenarioConfig) -> ScenarioConfig:
    """Check every invariant; return a copy with Omega recomputed from (a, q)."""
    bad = []
    for name in ("N", "K"):
        v = getattr(config, name)
        if not isinstance(v, (int, np.integer)) or v < 1:
            bad.append(f"{name} >= 1 (got {v!r})")
    if not isinstance(config.M, (int, np.integer)) or config.M < 0:
        bad.append(f"M >= 0 (got {config.M!r})")
    if not (math.isfinite(config.P_BS_max) and config.P_BS_max >= 0):
        bad.append(f"P_BS_max >= 0 (got {config.P_BS_max!r})")
    _positive("sigma0_sq", config.sigma0_sq, bad)
    _positive("sigma1_sq", config.sigma1_sq, bad)
    if not (math.isfinite(config.beta_max) and config.beta_max >= 1):
        bad.append(f"beta_max >= 1 (got {config.beta_max!r})")

    e = config.energy
    for name in ("Z", "a", "q"):
        _positive(name, getattr(e, name), bad)
    if not (math.isfinite(e.xi) and e.xi >= 1):
        bad.append(f"xi >= 1 (got {e.xi!r})")
    for name in ("P_b", "P_DC", "P_C"):
        v = getattr(e, name)
        if not (math.isfinite(v) and v >= 0):
            bad.append(f"{name} >= 0 (got {v!r})")

    u = config.uncertainty
    for name in ("kappa_h", "kappa_g", "kappa_H"):
        v = getattr(u, name)
        if not (math.isfinite(v) and v >= 0):
            bad.append(f"{name} >= 0 (got {v!r})")

    g = config.geometry
    for name in ("bs", "ris", "user_center"):
        p = getattr(g, name)
        if len(p) != 3 or not all(math.isfinite(float(c)) for c in p):
            bad.append(f"geometry.{name} must be three finite coordinates")
    if not (math.isfinite(g.user_radius) and g.user_radius >= 0):
        bad.append("geometry.user_radius >= 0")
    for name in ("exp_bs_ris", "exp_bs_user", "exp_ris_user"):
        if not getattr(g, name) >= 0:
            bad.append(f"geometry.{name} >= 0")
    for name in ("rician_bs_ris", "rician_bs_user", "rician_ris_user"):
        if not getattr(g, name) >= 0:
            bad.append(f"geometry.{name} >= 0")
    if not g.spacing > 0:
        bad.append("geometry.spacing > 0")
    if not (0 <= int(config.rng_seed) < 2**64):
        bad.append("seed must be a 64-bit unsigned integer")

    if bad:
        raise ConfigError(bad)
    energy = replace(e, Omega=omega_of(e.a, e.q))
    return replace(config, energy=energy,
                   geometry=replace(g, bs=tuple(map(float, g.bs)), ris=tuple(map(float, g.ris)),
                                    user_center=tuple(map(float, g.user_center))))


# ---------------------------------------------------------------- JSON I/O

_num = {"type": "number"}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SWEEP_VARIABLES = ("M_A", "P_BS_max", "M", "ris_position_Y", "total_power")
SCHEMES = ("mf-ris", "self-sustainable", "reflecting-only", "no-ris", "non-robust")
CSI_MODES = ("perfect", "robust", "non-robust")

CONFIG_SCHEMA = _obj({
    "schema_version": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "system": _obj({
        "N": {"type": "integer"}, "K": {"type": "integer"}, "M": {"type": "integer"},
        "P_BS_max_dBm": _num, "sigma0_sq_dBm": _num, "sigma1_sq_dBm": _num,
        "beta_max_dB": _num,
    }),
    "geometry": _obj({
        "bs": _vec3, "ris": _vec3, "user_center": _vec3, "user_radius": _num,
        "ref_loss_dB": _num,
        "exponents": _obj({"bs_ris": _num, "bs_user": _num, "ris_user": _num}),
        "rician_dB": _obj({"bs_ris": _num, "bs_user": _num, "ris_user": _num}),
        "spacing_wavelengths": _num,
    }),
    "energy": _obj({
        "Z_W": _num, "a_per_W": _num, "q_W": _num, "xi": _num,
        "P_b_W": _num, "P_DC_W": _num, "P_C_W": _num, "Omega": _num,
    }),
    "uncertainty": _obj({"kappa_h_sq": _num, "kappa_g_sq": _num, "kappa_H_sq": _num}),
    "sweep": _obj({
        "variable": {"enum": list(SWEEP_VARIABLES)},
        "values": {"type": "array", "items": _num, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1},
        "schemes": {"type": "array", "items": {"enum": list(SCHEMES)}, "minItems": 1},
        "csi": {"enum": list(CSI_MODES)},
        "workers": {"type": "integer", "minimum": 1},
        "max_outer": {"type": "integer", "minimum": 1},
        "siso": _obj({"h_sq_dB": _num, "g_sq_dB": _num, "sumPA_W": _num}),
    }),
}, required=("schema_version",))


def _schema_errors(doc):
    v = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errs = []
    for err in sorted(v.iter_errors(doc), key=lambda e: list(map(str, e.path))):
        where = "/".join(map(str, err.path)) or "<root>"
        errs.append(f"{where}: {err.message}")
    return errs


def config_from_dict(doc: dict) -> tuple[ScenarioConfig, dict]:
    """Build a validated config from a parsed JSON document.

    Returns (config, sweep_section).  Missing keys fall back to the defaults.
    """
    errs = _schema_errors(doc)
    if not errs and doc.get("schema_version") != SCHEMA_VERSION:
        errs.append(f"schema_version: expected {SCHEMA_VERSION!r}, got {doc.get('schema_version')!r}")
    if errs:
        raise ConfigError(errs)

    base = ScenarioConfig()
    s = doc.get("system", {})
    kw: dict[str, Any] = {}
    for key in ("N", "K", "M"):
        if key in s:
            kw[key] = int(s[key])
    if "P_BS_max_dBm" in s:
        kw["P_BS_max"] = db_convert(s["P_BS_max_dBm"], "dbm->watts")
    if "sigma0_sq_dBm" in s:
        kw["sigma0_sq"] = db_convert(s["sigma0_sq_dBm"], "dbm->watts")
    if "sigma1_sq_dBm" in s:
        kw["sigma1_sq"] = db_convert(s["sigma1_sq_dBm"], "dbm->watts")
    if "beta_max_dB" in s:
        kw["beta_max"] = db_convert(s["beta_max_dB"], "db->linear")

    g = doc.get("geometry", {})
    gkw: dict[str, Any] = {}
    for key in ("bs", "ris", "user_center"):
        if key in g:
            gkw[key] = tuple(float(c) for c in g[key])
    if "user_radius" in g:
        gkw["user_radius"] = float(g["user_radius"])
    if "ref_loss_dB" in g:
        gkw["ref_loss_db"] = float(g["ref_loss_dB"])
    for link, val in g.get("exponents", {}).items():
        gkw[f"exp_{link}"] = float(val)
    for link, val in g.get("rician_dB", {}).items():
        gkw[f"rician_{link}"] = db_convert(val, "db->linear")
    if "spacing_wavelengths" in g:
        gkw["spacing"] = float(g["spacing_wavelengths"])

    e = doc.get("energy", {})
    names = {"Z_W": "Z", "a_per_W": "a", "q_W": "q", "xi": "xi", "P_b_W": "P_b",
             "P_DC_W": "P_DC", "P_C_W": "P_C", "Omega": "Omega"}
    ekw = {names[k]: float(v) for k, v in e.items()}

    u = doc.get("uncertainty", {})
    ukw = {k[:-3]: math.sqrt(v) if v >= 0 else float("nan") for k, v in u.items()}

    cfg = replace(base, **kw,
                  geometry=replace(base.geometry, **gkw),
                  energy=replace(base.energy, **ekw),
                  uncertainty=replace(base.uncertainty, **ukw),
                  rng_seed=int(doc.get("seed", base.rng_seed)))
    return validate(cfg), dict(doc.get("sweep", {}))


def load_config(path) -> tuple[ScenarioConfig, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"])
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return config_from_dict(doc)


def config_to_dict(config: ScenarioConfig, sweep: dict | None = None) -> dict:
    """Inverse of config_from_dict (up to floating point round-off)."""
    g, e, u = config.geometry, config.energy, config.uncertainty
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": int(config.rng_seed),
        "system": {
            "N": config.N, "K": config.K, "M": config.M,
            "P_BS_max_dBm": float(watts_to_dbm(config.P_BS_max)) if config.P_BS_max > 0 else -300.0,
            "sigma0_sq_dBm": float(watts_to_dbm(config.sigma0_sq)),
            "sigma1_sq_dBm": float(watts_to_dbm(config.sigma1_sq)),
            "beta_max_dB": float(linear_to_db(config.beta_max)),
        },
        "geometry": {
            "bs": list(g.bs), "ris": list(g.ris), "user_center": list(g.user_center),
            "user_radius": g.user_radius, "ref_loss_dB": g.ref_loss_db,
            "exponents": {"bs_ris": g.exp_bs_ris, "bs_user": g.exp_bs_user, "ris_user": g.exp_ris_user},
            "rician_dB": {"bs_ris": float(linear_to_db(g.rician_bs_ris)),
                          "bs_user": float(linear_to_db(g.rician_bs_user)),
                          "ris_user": float(linear_to_db(g.rician_ris_user))},
            "spacing_wavelengths": g.spacing,
        },
        "energy": {"Z_W": e.Z, "a_per_W": e.a, "q_W": e.q, "xi": e.xi,
                   "P_b_W": e.P_b, "P_DC_W": e.P_DC, "P_C_W": e.P_C},
        "uncertainty": {"kappa_h_sq": u.kappa_h ** 2, "kappa_g_sq": u.kappa_g ** 2,
                        "kappa_H_sq": u.kappa_H ** 2},
    }
    if sweep:
        doc["sweep"] = dict(sweep)
    return doc


def as_dict(config: ScenarioConfig) -> dict:
    return asdict(config)
