"""Seeded Monte Carlo sweeps over the scenario and CSV emission."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import AnalysisParams, snr_mf, snr_se, sum_harvest_los
from .channel import generate_channel_set
from .energy import MARGIN_TOL, SurfaceState, power_report
from .optimizer.ao import alternating_optimize
from .optimizer.model import Instance, Settings
from .optimizer.rates import sum_rate
from .scenario import (CSI_MODES, SCHEMES, SWEEP_VARIABLES, ConfigError, ScenarioConfig,
                       db_convert, validate)

CSV_HEADER = ("scheme", "csi", "swept_var", "swept_value", "trial", "seed", "metric", "value",
              "status", "iters", "wall_ms")

OK, INFEASIBLE, FAILED = "ok", "infeasible", "failed"
SISO_SCHEMES = ("mf-ris", "self-sustainable")
RIS_SCHEMES = ("mf-ris", "self-sustainable", "reflecting-only", "non-robust")


@dataclass(frozen=True)
class SisoSpec:
    """Line-of-sight single-user link for closed-form sweeps; sumPA_W=None
    takes the harvest of the whole surface."""
    h_sq_dB: float = -45.0
    g_sq_dB: float = -60.0
    sumPA_W: float | None = None


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    trials: int = 1
    schemes: tuple = ("mf-ris",)
    csi: str = "perfect"
    max_outer: int | None = None
    workers: int = 1
    siso: SisoSpec | None = None

    def __post_init__(self):
        bad = []
        if self.variable not in SWEEP_VARIABLES:
            bad.append(f"sweep variable must be one of {SWEEP_VARIABLES} (got {self.variable!r})")
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if not values:
            bad.append("sweep grid must be nonempty")
        finite = all(math.isfinite(v) for v in values)
        if not finite:
            bad.append("sweep values must be finite")
        if not (isinstance(self.trials, (int, np.integer)) and self.trials >= 1):
            bad.append(f"trials >= 1 (got {self.trials!r})")
        if not self.schemes or any(s not in SCHEMES for s in self.schemes):
            bad.append(f"schemes must be a nonempty subset of {SCHEMES} (got {list(self.schemes)})")
        if len(set(self.schemes)) != len(self.schemes):
            bad.append("schemes must not repeat")
        if self.csi not in CSI_MODES:
            bad.append(f"csi must be one of {CSI_MODES} (got {self.csi!r})")
        if self.workers < 1:
            bad.append("workers >= 1")
        if self.is_siso:
            extra = [s for s in self.schemes if s not in SISO_SCHEMES]
            if extra:
                bad.append(f"closed-form M_A sweeps support {SISO_SCHEMES} only (got {extra})")
            if finite and any(v < 0 or v != int(v) for v in values):
                bad.append("M_A values must be nonnegative integers")
        if self.variable == "M" and finite and any(v < 0 or v != int(v) for v in values):
            bad.append("M values must be nonnegative integers")
        if bad:
            raise ConfigError(bad)

    @property
    def is_siso(self):
        return self.variable == "M_A"

    @classmethod
    def from_dict(cls, doc: dict, **overrides):
        """From the `sweep` section of a config document; overrides that are
        None are ignored."""
        kw = {k: v for k, v in doc.items() if k != "siso"}
        if "siso" in doc:
            kw["siso"] = SisoSpec(**doc["siso"])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        if "variable" not in kw or "values" not in kw:
            raise ConfigError(["sweep needs a variable and grid values"])
        return cls(**kw)


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    csi: str
    swept_var: str
    swept_value: float
    trial: int
    seed: int
    metric: str
    value: float
    status: str
    iters: int
    wall_ms: float = field(default=0.0, compare=False)
    point: int = field(default=0, compare=False)

    @property
    def failed(self):
        return self.status.startswith(FAILED)


# ---------------------------------------------------------------- seeding

def trial_seed(seed, trial):
    """Sub-seed of one trial.  It does not depend on the grid point, so every
    point of a sweep sees the same user drops and fading (common random
    numbers), which keeps trends free of resampling noise."""
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- grid points

def point_config(config: ScenarioConfig, variable, value) -> ScenarioConfig:
    if variable in ("P_BS_max", "total_power"):
        return replace(config, P_BS_max=float(db_convert(value, "dbm->watts")))
    if variable == "M":
        return replace(config, M=int(value))
    if variable == "ris_position_Y":
        g = config.geometry
        return replace(config, geometry=replace(g, ris=(g.ris[0], float(value), g.ris[2])))
    if variable == "M_A":
        return config
    raise ValueError(f"unknown sweep variable {variable!r}")


def scheme_config(config: ScenarioConfig, scheme, variable):
    """Reflecting-only counts its phase-shifter supply against a total budget."""
    if variable == "total_power" and scheme == "reflecting-only":
        P = config.P_BS_max - config.M * config.energy.P_b
        if P <= 0:
            return None
        return replace(config, P_BS_max=P)
    return config


def siso_params(config: ScenarioConfig, siso: SisoSpec | None, M_A) -> AnalysisParams:
    siso = siso or SisoSpec()
    h_sq = float(db_convert(siso.h_sq_dB, "db->linear"))
    g_sq = float(db_convert(siso.g_sq_dB, "db->linear"))
    sumPA = siso.sumPA_W
    if sumPA is None:
        sumPA = sum_harvest_los(config.P_BS_max, h_sq, config.sigma1_sq, config.M, config.energy)
    return AnalysisParams(P_BS_max=config.P_BS_max, M=config.M, M_A=int(M_A), h_sq=h_sq, g_sq=g_sq,
                          sigma0_sq=config.sigma0_sq, sigma1_sq=config.sigma1_sq,
                          beta_max=config.beta_max, energy=config.energy, sumPA=float(sumPA))


# ---------------------------------------------------------------- one solve

@dataclass
class Outcome:
    value: float
    status: str
    iters: int
    metric: str = "sum_rate"
    result: object = None


def surface_off(inst: Instance) -> SurfaceState:
    """Zero reflection: harvesting everywhere, or zero gain when modes are fixed."""
    M = inst.M
    alpha = np.ones(M) if inst.model.fixed_alpha else np.zeros(M)
    return SurfaceState(alpha, np.zeros(M), np.zeros(M))


def _energy_ok(inst: Instance, state, beams, H):
    if not inst.model.energy_constrained or inst.M == 0:
        return True
    rep = power_report(state, H, beams.F, inst.energy, inst.sigma1_sq, inst.model)
    return rep.margin >= -MARGIN_TOL


def _perfect(inst: Instance, settings, seed, estimated, anchor=None):
    """AO from the default start and, for surfaces, also from the surface
    switched off with the no-surface beams; the feasible set contains that
    point and AO never loses rate, so the surface never does worse than no
    surface.  The better run is kept."""
    runs = [alternating_optimize(inst, settings=settings, rng=np.random.default_rng([seed, 1]),
                                 estimated=estimated)]
    if anchor is not None and inst.M > 0 and inst.model.name != "no-ris":
        runs.append(alternating_optimize(inst, state=surface_off(inst), beams=anchor.beams,
                                         settings=settings, estimated=estimated))
    best = max(runs, key=lambda r: (r.feasible, r.sum_rate))
    return best, sum(len(r.trace) for r in runs)


def _run_miso(inst: Instance, scheme, csi, settings, seed, anchors):
    if csi == "robust" and scheme != "non-robust":
        from .robust.ao import robust_alternating_optimize
        res = robust_alternating_optimize(inst, settings=settings, rng=np.random.default_rng([seed, 1]))
        return Outcome(res.sum_rate, OK if res.feasible else INFEASIBLE, len(res.trace),
                       "worst_case_sum_rate", res)
    estimated = csi == "non-robust" or scheme == "non-robust"
    res, iters = _perfect(inst, settings, seed, estimated, anchors.get(estimated))
    cs = inst.channels
    value = sum_rate(cs, res.state.coefficients, res.beams.f, inst.sigma0_sq, inst.sigma1_sq)
    ok = _energy_ok(inst, res.state, res.beams, cs.H)
    return Outcome(value, OK if ok else INFEASIBLE, iters, "sum_rate", res)


def _no_ris_anchor(config, cs, settings, seed, estimated):
    inst = Instance.from_config(config, cs, "no-ris")
    return alternating_optimize(inst, settings=settings, rng=np.random.default_rng([seed, 1]),
                                estimated=estimated)


def _task(args):
    """All schemes of one (grid point, trial)."""
    config, spec, point, value, trial = args
    seed = trial_seed(config.rng_seed, trial)
    cfg = point_config(config, spec.variable, value)
    settings = Settings() if spec.max_outer is None else replace(Settings(), max_outer=spec.max_outer)
    rows = []

    def row(scheme, out: Outcome, t0, metric=None):
        rows.append(ResultRow(scheme, spec.csi, spec.variable, float(value), int(trial), seed,
                              metric or out.metric, float(out.value), out.status, int(out.iters),
                              1e3 * (time.monotonic() - t0), point))

    if spec.is_siso:
        for scheme in spec.schemes:
            t0 = time.monotonic()
            try:
                p = siso_params(cfg, spec.siso, value)
                r = snr_mf(p) if scheme == "mf-ris" else snr_se(p)
                db = 10 * math.log10(r.gamma) if r.gamma > 0 else -math.inf
                row(scheme, Outcome(db, OK if r.feasible else INFEASIBLE, 0, "snr_db"), t0)
            except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
                row(scheme, Outcome(math.nan, f"{FAILED}:{type(exc).__name__}", 0, "snr_db"), t0)
        return rows

    cs = None
    anchors = {}
    for scheme in spec.schemes:
        t0 = time.monotonic()
        metric = "worst_case_sum_rate" if spec.csi == "robust" and scheme != "non-robust" else "sum_rate"
        try:
            scfg = scheme_config(cfg, scheme, spec.variable)
            if scfg is None:
                row(scheme, Outcome(0.0, INFEASIBLE, 0, metric), t0)
                continue
            if cs is None:
                cs = generate_channel_set(cfg, np.random.default_rng(seed))
            if spec.csi != "robust" or scheme == "non-robust":
                estimated = spec.csi == "non-robust" or scheme == "non-robust"
                if scheme in RIS_SCHEMES and scfg is cfg and estimated not in anchors:
                    anchors[estimated] = _no_ris_anchor(cfg, cs, settings, seed, estimated)
            model = "mf-ris" if scheme == "non-robust" else scheme
            inst = Instance.from_config(scfg, cs, model)
            row(scheme, _run_miso(inst, scheme, spec.csi, settings, seed,
                                  anchors if scfg is cfg else {}), t0)
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            row(scheme, Outcome(math.nan, f"{FAILED}:{type(exc).__name__}", 0, metric), t0)
    return rows


def run_sweep(config: ScenarioConfig, spec: SweepSpec) -> list[ResultRow]:
    """One row per (grid point, trial, scheme), sorted in that order whatever
    the number of workers."""
    config = validate(config)
    tasks = [(config, spec, i, v, t) for i, v in enumerate(spec.values) for t in range(spec.trials)]
    if spec.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    order = {s: i for i, s in enumerate(spec.schemes)}
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=lambda r: (r.point, r.trial, order[r.scheme]))


# ---------------------------------------------------------------- CSV

def _fmt(x):
    return f"{float(x):.9g}"


def csv_text(table, timing=False) -> str:
    """CSV of a result table.  wall_ms is left empty unless timing=True, as
    wall time would make repeated runs differ."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in table:
        w.writerow([r.scheme, r.csi, r.swept_var, _fmt(r.swept_value), r.trial, r.seed, r.metric,
                    _fmt(r.value), r.status, r.iters, _fmt(r.wall_ms) if timing else ""])
    return buf.getvalue()


def emit_csv(table, path, timing=False) -> Path:
    table = list(table)
    if not table:
        raise ValueError("empty result table; nothing written")
    path = Path(path)
    text = csv_text(table, timing)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summarize(table, scheme=None):
    """Mean value per (scheme, swept value) over trials, ignoring failures."""
    acc = {}
    for r in table:
        if r.failed or (scheme is not None and r.scheme != scheme):
            continue
        acc.setdefault((r.scheme, r.swept_value), []).append(r.value)
    return {k: float(np.mean(v)) for k, v in acc.items()}
