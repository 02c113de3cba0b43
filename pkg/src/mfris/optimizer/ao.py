"""Alternating optimization of beamformers and surface configuration."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..energy import MARGIN_TOL, SurfaceState, power_report, received_rf_power
from .beamforming import solve_beamforming_srocr
from .model import BeamformerState, Instance, Settings
from .rates import effective_channels, sum_rate
from .surface import solve_ris_penalty


@dataclass
class AOResult:
    state: SurfaceState
    beams: BeamformerState
    sum_rate: float
    feasible: bool
    converged: bool
    trace: list = field(default_factory=list)     # one dict per outer iteration
    flags: list = field(default_factory=list)


def mrt_beams(inst: Instance, state: SurfaceState, estimated=False):
    """Maximum-ratio beams with an equal power split; a user without a direct
    path is steered along its combined channel."""
    cs = inst.channels
    h = cs.h_est if estimated else cs.h
    eff = effective_channels(cs, state.coefficients, estimated)
    f = np.zeros((cs.K, cs.N), complex)
    for k in range(cs.K):
        d = np.conj(h[k])
        if np.linalg.norm(d) <= 1e-15:
            d = eff[k]
        n = np.linalg.norm(d)
        if n > 0:
            f[k] = np.conj(d) / n * np.sqrt(inst.P_max / cs.K)
    return BeamformerState(f)


def rzf_beams(inst: Instance, state: SurfaceState, estimated=False):
    """Regularized zero-forcing beams on the combined channels, scaled to the
    full power budget."""
    cs = inst.channels
    Hb = effective_channels(cs, state.coefficients, estimated)          # rows hbar_k
    reg = cs.K * inst.sigma0_sq / inst.P_max
    W = np.linalg.solve(Hb.conj().T @ Hb + reg * np.eye(cs.N), Hb.conj().T)   # N x K
    f = W.T
    n = np.linalg.norm(f)
    if not np.isfinite(n) or n <= 0:
        return mrt_beams(inst, state, estimated)
    return BeamformerState(f / n * np.sqrt(inst.P_max))


def start_beams(inst: Instance, state: SurfaceState, estimated=False):
    """The better of maximum-ratio and regularized zero-forcing beams,
    preferring those that keep the energy margin."""
    rate = lambda b: sum_rate(inst.channels, state.coefficients, b.f, inst.sigma0_sq, inst.sigma1_sq, estimated)
    ok = lambda b: (not inst.model.energy_constrained) or _margin(inst, state, b, estimated) >= -MARGIN_TOL
    cands = [mrt_beams(inst, state, estimated), rzf_beams(inst, state, estimated)]
    return max(cands, key=lambda b: (ok(b), rate(b)))


def _margin(inst, state, beams, estimated=False):
    H = inst.channels.H_est if estimated else inst.channels.H
    return power_report(state, H, beams.F, inst.energy, inst.sigma1_sq, inst.model).margin


def initial_state(inst: Instance, rng):
    """Random phases, unit gain, alternating modes with ceil(M/2) harvesting."""
    M = inst.M
    theta = rng.uniform(0, 2 * np.pi, M)
    model = inst.model
    if model.name == "no-ris":
        return SurfaceState(np.zeros(M), np.zeros(M), theta)
    if model.fixed_alpha:
        return SurfaceState(np.ones(M), np.full(M, min(1.0, model.beta_cap)), theta)
    alpha = (np.arange(M) % 2 == 1).astype(float)
    return SurfaceState(alpha, np.where(alpha > 0.5, 1.0, 0.0), theta)


def initialize(inst: Instance, rng, estimated=False):
    """Feasible starting point: amplifiers are switched to harvesting one at a
    time until the energy margin holds."""
    state = initial_state(inst, rng)
    beams = start_beams(inst, state, estimated)
    if not inst.model.energy_constrained:
        return state, beams
    H = inst.channels.H_est if estimated else inst.channels.H
    while _margin(inst, state, beams, estimated) < -MARGIN_TOL and state.n_amplify > 0:
        # the element that would harvest the most switches first
        incident = received_rf_power(H, beams.F, inst.sigma1_sq, np.zeros(inst.M))
        idx = np.flatnonzero(state.alpha > 0.5)
        m = idx[np.argmax(incident[idx])]
        alpha = state.alpha.copy()
        alpha[m] = 0.0
        state = SurfaceState(alpha, np.where(alpha > 0.5, state.beta, 0.0), state.theta)
        beams = start_beams(inst, state, estimated)
    return state, beams


def alternating_optimize(inst: Instance, state: SurfaceState | None = None,
                         beams: BeamformerState | None = None, settings: Settings | None = None,
                         rng=None, estimated=False, max_outer=None) -> AOResult:
    """Alternate the two subproblems; every accepted update keeps the exact
    energy margin and does not decrease the exact sum rate."""
    settings = settings or Settings()
    max_outer = settings.max_outer if max_outer is None else max_outer
    if state is None or beams is None:
        state, beams = initialize(inst, np.random.default_rng(0) if rng is None else rng, estimated)
    rate = lambda s, b: sum_rate(inst.channels, s.coefficients, b.f, inst.sigma0_sq, inst.sigma1_sq, estimated)
    feasible = lambda s, b: (not inst.model.energy_constrained) or _margin(inst, s, b, estimated) >= -MARGIN_TOL
    current = rate(state, beams)
    flags = [] if feasible(state, beams) else ["infeasible-start"]
    trace = []
    converged = False
    for it in range(max_outer):
        entry = {"outer": it, "flags": []}
        bf = solve_beamforming_srocr(inst, state, beams, settings, estimated)
        entry["F_ratios"] = np.asarray(bf.ratios, float).tolist()
        cand = bf.beams
        r = rate(state, cand)
        if feasible(state, cand) and r >= current - 1e-9:
            beams, current = cand, max(current, r)
        else:
            entry["flags"].append("beams-rejected")
        if not bf.trace.converged:
            entry["flags"].append("beams-not-converged")

        prev = current
        sr = solve_ris_penalty(inst, state, beams, settings, estimated)
        entry.update(U_ratio=sr.U_ratio, slack=sr.slack,
                     relaxed_alpha=np.asarray(sr.relaxed_alpha, float).tolist(),
                     sum_rate_relaxed=sr.sum_rate_relaxed, sum_rate_rounded=sr.sum_rate_after)
        entry["flags"].extend(sr.flags)
        if sr.accepted:
            state, current = sr.state, rate(sr.state, beams)
        entry["sum_rate"] = current
        trace.append(entry)
        if it > 0 and abs(current - trace[-2]["sum_rate"]) <= settings.outer_tol * max(abs(prev), 1.0):
            converged = True
            break
    return AOResult(state, beams, current, feasible(state, beams), converged, trace, flags)
