"""Transmit beamforming for a fixed surface configuration."""
from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from ..conic import ConicProgram, solve
from ..energy import MARGIN_TOL, SurfaceState, power_report
from .common import (MW, StepResult, SrocrTrace, add_energy_block, add_rate_surrogates,
                     logistic_aux, run_srocr)
from .lifting import extract_rank_one
from .model import BeamformerState, Instance, Settings
from .rates import effective_channels, sinr_terms


@dataclass
class BeamformingResult:
    beams: BeamformerState
    F: list                    # relaxed matrices of the last accepted solve
    surrogate: float
    trace: SrocrTrace

    @property
    def ratios(self):
        return self.trace.ratios[-1] if self.trace.ratios else np.ones(len(self.F))


def _user_terms(inst: Instance, state: SurfaceState, estimated=False):
    """Normalized rank-one signal matrices and the surface-plus-thermal noise."""
    cs = inst.channels
    c = state.coefficients if state.M else np.zeros(0, complex)
    hb = effective_channels(cs, c, estimated) / np.sqrt(inst.sigma0_sq)
    R = [np.outer(np.conj(x), x) for x in hb]
    _, _, ris_noise = sinr_terms(cs, c, np.zeros((cs.K, cs.N)), inst.sigma0_sq, inst.sigma1_sq, estimated)
    return R, ris_noise / inst.sigma0_sq + 1.0


def _quad(R, F):
    return float(np.real(np.trace(R @ F)))


def expansion_point(inst: Instance, state: SurfaceState, F, estimated=False):
    """(signal, interference+noise, C) at the matrices F, in solver units."""
    R, noise = _user_terms(inst, state, estimated)
    K = len(F)
    S0 = np.array([_quad(R[k], F[k]) for k in range(K)])
    I0 = np.array([sum(_quad(R[k], F[i]) for i in range(K) if i != k) for k in range(K)]) + noise
    H = inst.channels.H_est if estimated else inst.channels.H
    Fsum = sum(F)
    inc = np.einsum("mi,ij,mj->m", H, Fsum, H.conj()).real if state.M else np.zeros(0)
    C0 = logistic_aux(inc + inst.sigma1_sq, inst.energy)
    return S0, I0, C0


def _floor_signal(S0):
    top = max(float(np.max(S0)), 1e-12) if S0.size else 1.0
    return np.maximum(S0, 1e-2 * top)


def build_beamforming_program(inst: Instance, state: SurfaceState, point, w, dirs, estimated=False):
    """Convex restriction of the beamforming subproblem around point=(S0, I0, C0)."""
    S0, I0, C0 = point
    cs = inst.channels
    K, N = cs.K, cs.N
    R, noise = _user_terms(inst, state, estimated)
    prog = ConicProgram()
    F = [prog.var(f"F{k}", (N, N), hermitian=True) for k in range(K)]
    for k in range(K):
        prog.psd("psd-F", F[k])
    prog.add("power", cp.sum([cp.real(cp.trace(Fk)) for Fk in F]) <= inst.P_max)
    for k in range(K):
        if w[k] > 0:
            u = dirs[k]
            prog.add("rank-one", cp.real(u.conj() @ F[k] @ u) >= w[k] * cp.real(cp.trace(F[k])))
    signal = [cp.real(cp.trace(R[k] @ F[k])) for k in range(K)]
    interference = [sum((cp.real(cp.trace(R[k] @ F[i])) for i in range(K) if i != k), noise[k])
                    for k in range(K)]
    users = {k for k in range(K) if np.real(np.trace(R[k])) > 0}
    Q, _, _ = add_rate_surrogates(prog, signal, interference, _floor_signal(S0), I0, users)
    model = inst.model
    if model.energy_constrained and state.M:
        H = cs.H_est if estimated else cs.H
        harvest = np.flatnonzero(state.alpha < 0.5)
        Fsum = sum(F)
        # per-element incident power H_m Fsum H_m^H, linear in F
        inc = [cp.real(H[m] @ Fsum @ H[m].conj()) for m in range(state.M)]
        amp = np.abs(state.coefficients) ** 2
        out = sum(amp[m] * (inc[m] + inst.sigma1_sq) for m in range(state.M) if amp[m] > 0)
        consumed = MW * (model.amp_cost * state.n_amplify + model.circuit_cost * harvest.size)
        rf = cp.hstack([MW * (inc[m] + inst.sigma1_sq) for m in harvest]) if harvest.size else np.zeros(0)
        add_energy_block(prog, inst.energy, C0[harvest], rf, consumed, MW * model.out_weight * out)
    prog.maximize(cp.sum(Q))
    return prog, F


def project_beams(F, P_max):
    """Nearest PSD matrices, scaled down if the sum power exceeds the budget."""
    out = []
    for X in F:
        w, V = np.linalg.eigh((X + X.conj().T) / 2)
        out.append((V * np.maximum(w, 0.0)) @ V.conj().T)
    total = sum(float(np.trace(X).real) for X in out)
    if total > P_max:
        out = [X * (P_max / total) for X in out]
    return out


def verified(inst: Instance, state: SurfaceState, F, estimated=False):
    """Exact energy check of relaxed matrices (the power budget holds by projection)."""
    if not (inst.model.energy_constrained and state.M):
        return True
    H = inst.channels.H_est if estimated else inst.channels.H
    return power_report(state, H, F, inst.energy, inst.sigma1_sq, inst.model).margin >= -MARGIN_TOL


def solve_beamforming_srocr(inst: Instance, state: SurfaceState, beams: BeamformerState,
                            settings: Settings | None = None, estimated=False) -> BeamformingResult:
    """Sum-rate beamforming with the surface fixed, recovered as rank-one beams."""
    settings = settings or Settings()
    F0 = beams.F

    def step(point, w, dirs):
        prog, F = build_beamforming_program(inst, state, point, w, dirs, estimated)
        sol = solve(prog)
        if not sol.values or any(v is None for v in sol.values.values()) or not np.isfinite(sol.value):
            return None
        Fv = project_beams([sol[f"F{k}"] for k in range(inst.K)], inst.P_max)
        # inaccurate solves are kept when the projected point passes the exact checks
        if not sol.ok and not verified(inst, state, Fv, estimated):
            return None
        return StepResult(expansion_point(inst, state, Fv, estimated), Fv, sol.value)

    point0 = expansion_point(inst, state, F0, estimated)
    _, F, trace = run_srocr(step, point0, F0, settings)
    target = settings.rank_target - 1e-6 if trace.converged else 0.0
    f = np.array([extract_rank_one(X, threshold=target) for X in F])
    surrogate = trace.objectives[-1] if trace.objectives else np.nan
    return BeamformingResult(BeamformerState(f), F, surrogate, trace)
