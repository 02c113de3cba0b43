"""Robust beamforming and surface subproblems and their inner loops.

Both steps are successive convex restrictions around a point whose worst-case
values come from :func:`certify`. A candidate is kept only when its own
certificate is energy-feasible and its certified sum rate does not drop, so
every accepted iterate carries a guarantee over the whole uncertainty set.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from ..conic import ConicProgram, solve
from ..energy import harvested_power
from ..optimizer.common import MW, add_energy_block, add_rate_surrogates, logistic_aux
from ..optimizer.model import Settings
from ..optimizer.surface import project_modes
from .blocks import (Certificate, RobustData, RobustSlacks, add_schur_blocks, certify,
                     harvest_block, output_block_beams, output_block_surface, signal_block)

SIGNAL_FLOOR = 1e-9        # noise units; users certified below this are not served


@dataclass
class RobustPoint:
    """Current iterate: modes, coefficients, unit-power beams and their certificate."""
    alpha: np.ndarray
    c: np.ndarray
    phi: np.ndarray
    cert: Certificate

    @classmethod
    def at(cls, data: RobustData, alpha, c, phi):
        alpha = np.asarray(alpha, float)
        c = np.asarray(c, complex)
        phi = np.asarray(phi, complex)
        return cls(alpha, c, phi, certify(data, alpha, c, phi))

    @property
    def sum_rate(self):
        return self.cert.sum_rate

    @property
    def feasible(self):
        return self.cert.feasible


def _users(S, revive=False):
    """Users kept in the rate surrogate. With revive=True users certified at
    (or below) zero signal are kept too, which forces a positive worst-case
    signal for them."""
    return set(range(len(S))) if revive else {k for k, s in enumerate(S) if s > SIGNAL_FLOOR}


def _expansion(cert: Certificate):
    """(S0, I0) of the surrogate; a starved user expands at SINR 1e-3."""
    I0 = np.asarray(cert.I, float)
    return np.maximum(cert.S, np.maximum(1e-3 * I0, SIGNAL_FLOOR)), I0


def _better(cand: RobustPoint, cur: RobustPoint, tol=1e-9):
    return cand.feasible and cand.sum_rate >= cur.sum_rate - tol


def _rel_change(new, old, tol):
    return abs(new - old) <= tol * max(abs(old), 1.0)


# ---------------------------------------------------------------- beamforming

def build_robust_beamforming(data: RobustData, point: RobustPoint, restore=False, revive=False):
    """Convex restriction over unit-power beams with the surface fixed.

    With restore=True the objective is the energy deficit instead of the
    rate surrogate, which is used to reach a certified-feasible start.
    """
    K, N, M = data.K, data.N, data.M
    c = point.c
    prog = ConicProgram()
    phi = prog.var("phi", (K, N), complex=True)
    prog.add("power", cp.sum_squares(phi) <= 1.0)
    t = prog.var("t", K)
    I = prog.var("I", K)
    D = prog.var("D", K, nonneg=True)
    for k in range(K):
        signal_block(prog, data, k, phi[k], c, point.phi[k], c, t[k], f"u-sig-{k}")
    add_schur_blocks(prog, data, phi, c, [I[k] for k in range(K)], [D[k] for k in range(K)])
    S0, I0 = _expansion(point.cert)
    Q, _, _ = add_rate_surrogates(prog, [t[k] for k in range(K)], [I[k] for k in range(K)],
                                  S0, I0, _users(point.cert.S, revive))
    deficit = _beam_energy(prog, data, point, phi, restore)
    if restore and deficit is not None:
        prog.maximize(-deficit)
    else:
        prog.maximize(cp.sum(Q))
    return prog


def _beam_energy(prog, data: RobustData, point: RobustPoint, phi, restore):
    model = data.inst.model
    if not (model.energy_constrained and data.M):
        return None
    energy = data.inst.energy
    harvest = np.flatnonzero(point.alpha < 0.5)
    rf = np.zeros(0)
    if harvest.size:
        rf = prog.var("rf", harvest.size)
        for j, m in enumerate(harvest):
            harvest_block(prog, data, m, phi, point.phi, rf[j], f"u-rf-{m}")
    W = prog.var("W")
    output_block_beams(prog, data, point.c, phi, W, "u-out")
    deficit = prog.var("deficit", nonneg=True) if restore else None
    C0 = logistic_aux(point.cert.rf_mw[harvest] / MW, energy)
    add_energy_block(prog, energy, C0, rf, MW * model.consumed(point.alpha, 0.0),
                     model.out_weight * W, 0.0 if deficit is None else deficit)
    return deficit


def _starved(point):
    """No user has a positive certified signal, so the surrogate is flat."""
    return bool(np.all(point.cert.S <= SIGNAL_FLOOR))


def _beam_candidate(data, point, restore=False):
    sol = None
    if _starved(point) and not restore:
        sol = solve(build_robust_beamforming(data, point, revive=True))
    if sol is None or not sol.ok:
        sol = solve(build_robust_beamforming(data, point, restore))
    if not sol.ok:
        return None, sol
    phi = np.asarray(sol["phi"], complex)
    n = np.linalg.norm(phi)
    if n > 1.0:
        phi = phi / n
    return RobustPoint.at(data, point.alpha, point.c, phi), sol


@dataclass
class StageResult:
    point: RobustPoint
    accepted: bool
    objectives: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    slacks: list = field(default_factory=list)
    residuals: list = field(default_factory=list)     # max(|c_m|^2 - e_m) per solve
    multipliers: RobustSlacks | None = None
    flags: list = field(default_factory=list)
    converged: bool = False


def restore_energy(data: RobustData, point: RobustPoint, settings: Settings, max_iter=None):
    """Reduce the certified energy deficit over the beams until it closes."""
    max_iter = settings.max_inner if max_iter is None else max_iter
    for _ in range(max_iter):
        if point.feasible:
            return point, True
        cand, sol = _beam_candidate(data, point, restore=True)
        if cand is None or cand.cert.margin <= point.cert.margin + 1e-15:
            break
        point = cand
    return point, point.feasible


def solve_robust_beamforming(data: RobustData, point: RobustPoint,
                             settings: Settings | None = None, max_iter=None) -> StageResult:
    """SCA over the beams; keeps the incoming point unless the certified
    sum rate improves with the energy guarantee intact."""
    settings = settings or Settings()
    max_iter = settings.max_inner if max_iter is None else max_iter
    res = StageResult(point, False)
    if not point.feasible:
        res.flags.append("infeasible-start")
        point, ok = restore_energy(data, point, settings)
        if not ok:
            res.flags.append("restoration-failed")
            res.point = point
            return res
        res.point, res.accepted = point, True
    cur = res.point
    for _ in range(max_iter):
        cand, sol = _beam_candidate(data, cur)
        if cand is None:
            res.flags.append(f"solve-{sol.status}")
            break
        res.objectives.append(sol.value)
        res.rates.append(cand.sum_rate)
        res.multipliers = collect_slacks(sol, data)
        if not _better(cand, cur):
            res.flags.append("candidate-rejected")
            break
        done = _rel_change(cand.sum_rate, cur.sum_rate, settings.rel_tol)
        cur = cand
        res.point, res.accepted = cur, True
        if done:
            res.converged = True
            break
    return res


# ---------------------------------------------------------------- surface

def build_robust_ris(data: RobustData, point: RobustPoint, rho=0.0, frozen=False, revive=False):
    """Convex restriction over the surface coefficients with the beams fixed.

    e_m >= |c_m|^2 are the gain surrogates (they enter the output-power block
    linearly), e_m <= beta_cap alpha_m ties them to the relaxed modes and the
    binary penalty d_m >= alpha_m - alpha_m^2 uses the tangent of alpha^2.
    With frozen=True the modes are the constants point.alpha and no penalty
    is used. Harvest at element m is (1 - alpha_m) times its certified worst
    incident power, which does not depend on the surface.
    """
    K, M = data.K, data.M
    model = data.inst.model
    phi = point.phi
    prog = ConicProgram()
    c = prog.var("c", M, complex=True)
    e = prog.var("e", M, nonneg=True)
    if frozen:
        alpha = point.alpha
    else:
        alpha = prog.var("alpha", M)
        d = prog.var("d", M, nonneg=True)
        a0 = point.alpha
        prog.add("box", alpha >= 0, alpha <= 1)
        prog.add("binary", cp.multiply(1 - 2 * a0, alpha) + a0 ** 2 <= d)
    prog.add("modulus", cp.square(cp.abs(c)) <= e)
    prog.add("gain", e <= model.beta_cap * alpha)
    t = prog.var("t", K)
    I = prog.var("I", K)
    D = prog.var("D", K, nonneg=True)
    for k in range(K):
        signal_block(prog, data, k, phi[k], c, phi[k], point.c, t[k], f"u-sig-{k}")
    add_schur_blocks(prog, data, phi, c, [I[k] for k in range(K)], [D[k] for k in range(K)],
                     surface_side=True)
    S0, I0 = _expansion(point.cert)
    Q, _, _ = add_rate_surrogates(prog, [t[k] for k in range(K)], [I[k] for k in range(K)],
                                  S0, I0, _users(point.cert.S, revive))
    if model.energy_constrained:
        energy = data.inst.energy
        R = np.maximum(point.cert.rf_mw, 0.0)
        W = prog.var("W")
        output_block_surface(prog, data, phi, e, np.arange(M), W, "u-out")
        if frozen:
            fixed = MW * float(np.sum(np.where(alpha > 0.5, 0.0, harvested_power(R / MW, energy))))
            prog.add("energy", fixed >= MW * model.consumed(alpha, 0.0) + model.out_weight * W)
        else:
            consumed = MW * (model.amp_cost * cp.sum(alpha) + model.circuit_cost * (M - cp.sum(alpha)))
            C0 = logistic_aux((1 - point.alpha) * R / MW, energy)
            add_energy_block(prog, energy, C0, cp.multiply(1 - alpha, R), consumed, model.out_weight * W)
    obj = cp.sum(Q)
    if not frozen:
        obj = obj - rho * cp.sum(d)
    prog.maximize(obj)
    return prog


def _solve_ris(data, point, **kw):
    sol = None
    if _starved(point):
        sol = solve(build_robust_ris(data, point, revive=True, **kw))
    if sol is None or not sol.ok:
        sol = solve(build_robust_ris(data, point, **kw))
    return sol


def _surface_values(sol, data, point, frozen):
    c = np.asarray(sol["c"], complex)
    e = np.asarray(sol["e"], float)
    alpha = point.alpha if frozen else np.clip(np.asarray(sol["alpha"], float), 0.0, 1.0)
    return alpha, c, e


def _clean(data, alpha, c):
    """Binary-mode coefficients: zero on harvesting elements, gain capped."""
    cap = data.inst.model.beta_cap
    c = np.where(alpha > 0.5, c, 0.0)
    mag = np.abs(c)
    over = mag ** 2 > cap
    c = np.where(over, c / np.maximum(mag, 1e-300) * np.sqrt(cap), c)
    return c


def run_robust_penalty(data: RobustData, point: RobustPoint, settings: Settings, res: StageResult):
    """Penalty iterations with relaxed modes; returns the last relaxed
    (alpha, c) or None when the first solve fails."""
    rho = settings.rho0
    cur = point
    out = None
    for _ in range(settings.T_max):
        sol = _solve_ris(data, cur, rho=rho)
        if not sol.ok:
            res.flags.append(f"penalty-{sol.status}")
            break
        alpha, c, e = _surface_values(sol, data, cur, False)
        slack = float(np.sum(sol["d"]))
        res.slacks.append(slack)
        res.residuals.append(float(np.max(np.abs(c) ** 2 - e, initial=0.0)))
        res.objectives.append(sol.value)
        res.multipliers = collect_slacks(sol, data)
        nxt = RobustPoint.at(data, alpha, c, cur.phi)
        small = out is not None and np.max(np.abs(alpha - out[0]), initial=0.0) <= settings.binary_tol
        out = (alpha, c)
        cur = nxt
        rho = min(settings.epsilon * rho, settings.rho_max)
        if slack <= settings.slack_tol and small:
            break
    else:
        res.flags.append("penalty-not-converged")
    return out


def frozen_sca(data: RobustData, point: RobustPoint, settings: Settings, res: StageResult,
               max_iter=None):
    """SCA over c with binary modes fixed; every accepted step is certified."""
    max_iter = settings.max_inner if max_iter is None else max_iter
    cur = point
    for _ in range(max_iter):
        sol = _solve_ris(data, cur, frozen=True)
        if not sol.ok:
            res.flags.append(f"frozen-{sol.status}")
            break
        _, c, e = _surface_values(sol, data, cur, True)
        res.residuals.append(float(np.max(np.abs(c) ** 2 - e, initial=0.0)))
        res.objectives.append(sol.value)
        cand = RobustPoint.at(data, cur.alpha, _clean(data, cur.alpha, c), cur.phi)
        res.rates.append(cand.sum_rate)
        if cur.feasible and not _better(cand, cur):
            break
        if not cand.feasible:
            res.flags.append("frozen-infeasible-candidate")
            break
        done = cur.feasible and _rel_change(cand.sum_rate, cur.sum_rate, settings.rel_tol)
        cur = cand
        if done:
            res.converged = True
            break
    return cur


def solve_robust_ris(data: RobustData, point: RobustPoint, settings: Settings | None = None) -> StageResult:
    """Penalty stage on relaxed modes, rounding to a self-sustaining mode
    pattern, then frozen-mode SCA. The incoming point is kept unless the
    result is certified feasible with a sum rate at least as high."""
    settings = settings or Settings()
    res = StageResult(point, False)
    model = data.inst.model
    if data.M == 0 or model.name == "no-ris":
        res.flags.append("no-surface")
        return res
    R = np.maximum(point.cert.rf_mw, 0.0) / MW
    if model.fixed_alpha:
        alpha, c = np.ones(data.M), point.c
    else:
        out = run_robust_penalty(data, point, settings, res)
        if out is None:
            return res
        relaxed, c = out
        alpha = (relaxed >= 0.5).astype(float)
        if model.energy_constrained:
            projected = project_modes(data.inst, alpha, R)
            if np.any(projected != alpha):
                res.flags.append("modes-projected")
            alpha = projected
    start = RobustPoint.at(data, alpha, _clean(data, alpha, c), point.phi)
    if not np.any(alpha > 0.5):
        cand = start
    else:
        cand = frozen_sca(data, start, settings, res)
    if _better(cand, point):
        res.point, res.accepted = cand, True
    else:
        res.flags.append("not-improving")
    return res


# ---------------------------------------------------------------- multipliers

def _mult(values, name, i=0):
    v = values.get(name)
    if v is None:
        return 0.0
    v = np.atleast_1d(v)
    return float(v[i]) if i < v.size else 0.0


def collect_slacks(sol, data: RobustData) -> RobustSlacks:
    """Multipliers of a solved program; zero where a ball had zero radius."""
    K, M = data.K, data.M
    vals = sol.values
    uh, uG = np.zeros(K), np.zeros(K)
    wh, wG, wg = np.zeros(K), np.zeros(K), np.zeros(K)
    for k in range(K):
        j = 0
        if data.xi_h[k] > 0:
            uh[k] = _mult(vals, f"u-sig-{k}", j)
            j += 1
        if data.xi_G[k] > 0 and M:
            uG[k] = _mult(vals, f"u-sig-{k}", j)
        j = 0
        if data.xi_h[k] > 0:
            wh[k] = _mult(vals, f"w-robust-interference-{k}", j)
            j += 1
        if data.xi_G[k] > 0 and M:
            wG[k] = _mult(vals, f"w-robust-interference-{k}", j)
        wg[k] = _mult(vals, f"w-robust-noise-{k}")
    uHm = np.array([_mult(vals, f"u-rf-{m}") for m in range(M)])
    D = np.asarray(vals.get("D", np.zeros(K)), float) * data.inst.sigma0_sq
    return RobustSlacks(uh, uG, uHm, _mult(vals, "u-out"), wh, wG, wg, np.maximum(D, 0.0))
