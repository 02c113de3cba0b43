"""Surface configuration (modes, gains, phases) for fixed beamformers.

Two stages: a penalty program on the lifted matrix U with relaxed modes
alpha in [0, 1], then rounding of alpha and a rank-one refinement with the
modes frozen, after which the coefficients are read off the leading
eigenvector of U.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from ..conic import ConicProgram, solve
from ..energy import MARGIN_TOL, SurfaceState, harvested_power, power_report
from .common import (MW, StepResult, SrocrTrace, add_energy_block, add_rate_surrogates,
                     logistic_aux, rank_ratios, run_srocr)
from .lifting import (coefficients_from_lift, complete_free_phase, extract_rank_one, lift_vector,
                      noise_matrix, output_matrix, stacked_channel)
from .model import BeamformerState, Instance, PenaltyState, Settings
from .rates import sum_rate


@dataclass
class SurfaceResult:
    state: SurfaceState
    accepted: bool
    sum_rate_before: float
    sum_rate_after: float
    relaxed_alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slack: float = np.nan            # sum of d + d_bar + s at the last penalty step
    U_ratio: float = np.nan
    sum_rate_relaxed: float = np.nan
    flags: list = field(default_factory=list)
    penalty_trace: SrocrTrace | None = None


@dataclass
class _Lifted:
    """Fixed-F data of the surface subproblem in noise units."""
    T: list          # T[k][i] = Ht_k F_i Ht_k^H / sigma0^2
    Nk: list         # surface noise matrices / sigma0^2
    incident: np.ndarray   # H_m sum(F) H_m^H + sigma1^2 per element, W
    Hbar: np.ndarray

    def signal(self, U, k):
        return cp.real(cp.trace(self.T[k][k] @ U))

    def interference(self, U, k):
        K = len(self.T)
        return sum((cp.real(cp.trace(self.T[k][i] @ U)) for i in range(K) if i != k),
                   cp.real(cp.trace(self.Nk[k] @ U)) + 1.0)

    def values(self, U):
        K = len(self.T)
        tr = lambda A: float(np.real(np.trace(A @ U)))
        S = np.array([tr(self.T[k][k]) for k in range(K)])
        I = np.array([sum(tr(self.T[k][i]) for i in range(K) if i != k) + tr(self.Nk[k]) + 1.0
                      for k in range(K)])
        return S, I


def _lifted(inst: Instance, beams: BeamformerState, estimated=False):
    cs = inst.channels
    h, g, H = (cs.h_est, cs.g_est, cs.H_est) if estimated else (cs.h, cs.g, cs.H)
    F = beams.F
    Ht = [stacked_channel(h[k], g[k], H) for k in range(cs.K)]
    T = [[Ht[k] @ F[i] @ Ht[k].conj().T / inst.sigma0_sq for i in range(cs.K)] for k in range(cs.K)]
    Nk = [noise_matrix(g[k], inst.sigma1_sq) / inst.sigma0_sq for k in range(cs.K)]
    Fsum = sum(F)
    inc = np.einsum("mi,ij,mj->m", H, Fsum, H.conj()).real + inst.sigma1_sq
    return _Lifted(T, Nk, inc, output_matrix(H, Fsum, inst.sigma1_sq))


def _floor(S0):
    top = max(float(np.max(S0)), 1e-12) if S0.size else 1.0
    return np.maximum(S0, 1e-3 * top)


def _rank_constraint(prog, U, w, v):
    if w > 0:
        prog.add("rank-one", cp.real(v.conj() @ U @ v) >= w * cp.real(cp.trace(U)))


def build_penalty_program(inst: Instance, L: _Lifted, point, rho, w, v, active):
    """Penalized convex restriction with relaxed modes around
    point = (S0, I0, C0, alpha0, beta0).

    Only the elements in `active` are variables; the others harvest (alpha = 0
    has zero gradient in the lower bound of eta, so the iteration could never
    switch them back) and enter through their exact harvested power.
    """
    S0, I0, C0, a0, b0 = point
    M = inst.M
    model = inst.model
    idx = np.asarray(active, int)
    n = idx.size
    Ls = _restrict(L, idx)
    a0, b0, C0 = a0[idx], b0[idx], C0[idx]
    prog = ConicProgram()
    U = prog.var("U", (n + 1, n + 1), hermitian=True)
    eta = prog.var("eta", n, nonneg=True)
    alpha = prog.var("alpha", n)
    beta = prog.var("beta", n)
    d = prog.var("d", n, nonneg=True)
    d_bar = prog.var("d_bar", n, nonneg=True)
    s = prog.var("s", n, nonneg=True)
    prog.psd("psd-U", U)
    prog.add("lift", cp.real(U[n, n]) == 1, cp.real(cp.diag(U))[:n] == eta)
    prog.add("box", alpha >= 0, alpha <= 1, beta >= 0, beta <= model.beta_cap)
    # eta tracks alpha^2 beta from both sides; slacks absorb the linearization error
    prog.add("eta-lower", eta <= 2 * cp.multiply(a0 * b0, alpha - a0) + cp.multiply(a0 ** 2, beta) + d)
    c = np.clip(b0 / np.maximum(a0 ** 2, 1e-12), 1e-3, 1e3)
    prog.add("eta-upper", cp.multiply(c / 2, cp.power(alpha, 4)) + cp.multiply(1 / (2 * c), cp.square(beta))
             <= eta + d_bar)
    # alpha - alpha^2 <= s with alpha^2 replaced by its tangent
    prog.add("binary", cp.multiply(1 - 2 * a0, alpha) + a0 ** 2 <= s)
    _rank_constraint(prog, U, w, v)
    K = inst.K
    users = {k for k in range(K) if np.real(np.trace(Ls.T[k][k])) > 0}
    Q, _, _ = add_rate_surrogates(prog, [Ls.signal(U, k) for k in range(K)],
                                  [Ls.interference(U, k) for k in range(K)], _floor(S0), I0, users)
    if model.energy_constrained:
        rest = np.setdiff1d(np.arange(M), idx)
        fixed = MW * float(np.sum(harvested_power(L.incident[rest], inst.energy))) if rest.size else 0.0
        rf = MW * cp.multiply(1 - alpha, Ls.incident)
        consumed = MW * (model.amp_cost * cp.sum(alpha) + model.circuit_cost * (M - cp.sum(alpha)))
        out = MW * model.out_weight * (Ls.incident @ eta)
        add_energy_block(prog, inst.energy, C0, rf, consumed, out, fixed)
    prog.maximize(cp.sum(Q) - rho * cp.sum(d + d_bar + s))
    return prog


def _restrict(L: _Lifted, idx):
    """Lifted data on the amplifying elements only (plus the trailing 1)."""
    keep = np.concatenate([idx, [L.Hbar.shape[0] - 1]])
    sub = lambda A: A[np.ix_(keep, keep)]
    return _Lifted([[sub(X) for X in row] for row in L.T], [sub(X) for X in L.Nk],
                   L.incident[idx], sub(L.Hbar))


def build_frozen_program(inst: Instance, L: _Lifted, alpha, point, w, v):
    """Rank-one step with binary modes fixed, written on the amplifying
    elements only (harvesting ones have zero coefficient); the harvest is then
    a constant."""
    S0, I0 = point
    model = inst.model
    idx = np.flatnonzero(alpha > 0.5)
    Ls = _restrict(L, idx)
    n = idx.size
    prog = ConicProgram()
    U = prog.var("U", (n + 1, n + 1), hermitian=True)
    prog.psd("psd-U", U)
    diag = cp.real(cp.diag(U))[:n]
    prog.add("lift", cp.real(U[n, n]) == 1)
    prog.add("box", diag <= model.beta_cap)
    _rank_constraint(prog, U, w, v)
    K = inst.K
    users = {k for k in range(K) if np.real(np.trace(Ls.T[k][k])) > 0}
    Q, _, _ = add_rate_surrogates(prog, [Ls.signal(U, k) for k in range(K)],
                                  [Ls.interference(U, k) for k in range(K)], _floor(S0), I0, users)
    if model.energy_constrained:
        room = zero_output_margin(inst, alpha, L.incident)
        prog.add("energy", MW * model.out_weight * (Ls.incident @ diag) <= MW * room)
    prog.maximize(cp.sum(Q))
    return prog


def zero_output_margin(inst: Instance, alpha, incident):
    """Energy margin when the amplifying elements emit nothing."""
    model = inst.model
    if not model.energy_constrained:
        return np.inf
    alpha = np.asarray(alpha, float)
    pa = np.where(alpha > 0.5, 0.0, harvested_power((1 - alpha) * incident, inst.energy))
    return float(np.sum(pa) - model.consumed(alpha, 0.0))


def project_modes(inst: Instance, alpha, incident):
    """Switch amplifying elements to harvesting, strongest harvest first,
    until the configuration can sustain itself with zero output."""
    alpha = np.asarray(alpha, float).copy()
    gain = harvested_power(incident, inst.energy) + inst.model.amp_cost - inst.model.circuit_cost
    while zero_output_margin(inst, alpha, incident) < 0 and np.any(alpha > 0.5):
        idx = np.flatnonzero(alpha > 0.5)
        alpha[idx[np.argmax(gain[idx])]] = 0.0
    return alpha


def repair_energy(inst: Instance, state: SurfaceState, incident):
    """Shrink all amplifier gains by one factor until the energy margin is met."""
    model = inst.model
    if not model.energy_constrained or state.M == 0:
        return state
    P_O = float(np.sum(np.abs(state.coefficients) ** 2 * incident))
    room = zero_output_margin(inst, state.alpha, incident)
    need = model.out_weight * P_O
    if need <= room or need <= 0:
        return state
    t = max(room, 0.0) / need * (1 - 1e-9)
    return SurfaceState(state.alpha, state.beta * t, state.theta)


def state_from_lift(inst: Instance, alpha, u):
    c = coefficients_from_lift(u)
    alpha = np.asarray(alpha, float)
    c = np.where(alpha > 0.5, c, 0.0)
    beta = np.minimum(np.abs(c) ** 2, inst.model.beta_cap)
    return SurfaceState(alpha, beta, np.angle(c))


def _u0(state: SurfaceState):
    u = lift_vector(state.coefficients)
    return np.outer(u, u.conj())


def _true_rate(inst, state, beams, estimated):
    return sum_rate(inst.channels, state.coefficients, beams.f, inst.sigma0_sq, inst.sigma1_sq, estimated)


def _feasible(inst, state, beams, estimated):
    if not inst.model.energy_constrained:
        return True
    H = inst.channels.H_est if estimated else inst.channels.H
    return power_report(state, H, beams.F, inst.energy, inst.sigma1_sq, inst.model).margin >= -MARGIN_TOL


@dataclass
class PenaltyOutcome:
    alpha: np.ndarray | None
    U: np.ndarray | None
    slack: float
    trace: SrocrTrace | None
    flags: list


def _embed(Us, keep, M):
    U = np.zeros((M + 1, M + 1), complex)
    U[np.ix_(keep, keep)] = Us
    return U


def _penalty_run(inst: Instance, L: _Lifted, a0, b0, U0, settings: Settings):
    pen = PenaltyState(settings.rho0, settings.epsilon, settings.rho_max, settings.T_max)
    M = inst.M

    def step(point, w, dirs):
        a_prev, b_prev = point[3], point[4]
        active = np.flatnonzero(a_prev > settings.binary_tol)
        keep = np.concatenate([active, [M]])
        rho = pen.rho
        pen.grow()
        if active.size == 0:
            # everything harvests: nothing left to decide
            U = _embed(np.ones((1, 1)), keep, M)
            S, I = L.values(U)
            zero = np.zeros(M)
            return StepResult((S, I, point[2], zero, zero), [U], _rate_sum(S, I), 0.0)
        v = dirs[0][keep]
        v = v / max(np.linalg.norm(v), 1e-300)
        prog = build_penalty_program(inst, L, point, rho, w[0], v, active)
        sol = solve(prog)
        if not sol.ok:
            return None
        Us = complete_free_phase((sol["U"] + sol["U"].conj().T) / 2)
        U = _embed(Us, keep, M)
        a = np.zeros(M)
        b = np.zeros(M)
        a[active] = np.clip(sol["alpha"], 0.0, 1.0)
        b[active] = np.clip(sol["beta"], 0.0, inst.model.beta_cap)
        S, I = L.values(U)
        C = logistic_aux((1 - a) * L.incident, inst.energy)
        slack = float(np.sum(sol["d"] + sol["d_bar"] + sol["s"]))
        return StepResult((S, I, C, a, b), [U], sol.value, slack)

    S0, I0 = L.values(U0)
    C0 = logistic_aux((1 - a0) * L.incident, inst.energy)
    return run_srocr(step, (S0, I0, C0, a0, b0), [U0], settings, max_iter=settings.T_max, lazy=True)


def _rate_sum(S, I):
    return float(np.sum(np.log2(1 + S / I)))


def run_penalty(inst: Instance, L: _Lifted, state: SurfaceState, settings: Settings) -> PenaltyOutcome:
    """Penalty iterations from the incoming configuration; if they have not
    converged after T_max steps they restart once from undecided modes."""
    a0 = state.alpha.astype(float)
    starts = [(a0, np.where(a0 > 0.5, state.beta, 0.0).astype(float), _u0(state))]
    for _ in range(settings.max_restarts):
        half = np.full(inst.M, 0.5)
        beta = np.full(inst.M, min(1.0, inst.model.beta_cap))
        starts.append((half, beta, _u0(SurfaceState(half, beta, state.theta))))
    best, flags = None, []
    for i, (a, b, U0) in enumerate(starts):
        point, mats, trace = _penalty_run(inst, L, a, b, U0, settings)
        if trace.objectives:
            best = PenaltyOutcome(point[3], mats[0], trace.slacks[-1], trace, flags)
        if trace.converged:
            return best
        flags.append("penalty-not-converged" if trace.objectives else "penalty-failed")
        if i + 1 < len(starts):
            flags.append("penalty-restarted")
    return best or PenaltyOutcome(None, None, np.nan, None, flags)


def frozen_refine(inst: Instance, L: _Lifted, alpha, U0, settings: Settings):
    """Returns the full-size lifted matrix (zero rows for harvesting elements)."""
    idx = np.flatnonzero(alpha > 0.5)
    keep = np.concatenate([idx, [inst.M]])
    Ls = _restrict(L, idx)

    def step(point, w, dirs):
        prog = build_frozen_program(inst, L, alpha, point, w[0], dirs[0])
        sol = solve(prog)
        if not sol.ok:
            return None
        Us = complete_free_phase((sol["U"] + sol["U"].conj().T) / 2)
        return StepResult(Ls.values(Us), [Us], sol.value)

    Us0 = U0[np.ix_(keep, keep)]
    _, mats, trace = run_srocr(step, Ls.values(Us0), [Us0], settings)
    return _embed(mats[0], keep, inst.M), trace


def solve_ris_penalty(inst: Instance, state: SurfaceState, beams: BeamformerState,
                      settings: Settings | None = None, estimated=False) -> SurfaceResult:
    """One surface update; keeps the incoming state unless the exact sum rate improves."""
    settings = settings or Settings()
    before = _true_rate(inst, state, beams, estimated)
    if state.M == 0 or inst.model.name == "no-ris":
        return SurfaceResult(state, False, before, before, flags=["no-surface"])
    L = _lifted(inst, beams, estimated)
    flags = []
    res = SurfaceResult(state, False, before, before, flags=flags)

    if inst.model.fixed_alpha:
        alpha = np.ones(inst.M)
    else:
        out = run_penalty(inst, L, state, settings)
        res.penalty_trace = out.trace
        flags.extend(out.flags)
        if out.alpha is None:
            return res
        relaxed = out.alpha
        res.relaxed_alpha = relaxed
        res.slack = out.slack
        try:
            u = extract_rank_one(out.U, threshold=0.0, lifted=True)
            res.sum_rate_relaxed = sum_rate(inst.channels, coefficients_from_lift(u), beams.f,
                                            inst.sigma0_sq, inst.sigma1_sq, estimated)
        except ValueError:
            flags.append("relaxed-extraction-failed")
        alpha = project_modes(inst, (relaxed >= 0.5).astype(float), L.incident)
        if np.any(alpha != (relaxed >= 0.5)):
            flags.append("modes-projected")

    cand, ratio = _refine_modes(inst, L, alpha, state, settings, flags)
    if not inst.model.fixed_alpha and np.any(state.alpha > 0.5) and np.any(alpha != state.alpha):
        # the rounded modes can lose to the incoming ones whose gains were
        # never refined (penalty slack is cheap while rho is small)
        keep, keep_ratio = _refine_modes(inst, L, state.alpha, state, settings, [])
        if keep is not None and (cand is None or _better(inst, keep, cand, beams, estimated)):
            cand, ratio = keep, keep_ratio
            flags.append("kept-modes")
    if cand is None:
        return res
    res.U_ratio = ratio
    if not inst.model.fixed_alpha and settings.mode_trials > 0:
        cand = mode_search(inst, L, cand, beams, settings, estimated, flags)
    return _finish(inst, res, cand, beams, estimated)


def _refine_modes(inst, L, alpha, state, settings, flags):
    """Frozen-mode refinement warm-started from the incoming phases
    restricted to `alpha`; (state, rank ratio of U) or (None, nan)."""
    start = SurfaceState(alpha, np.where(alpha > 0.5, np.where(state.alpha > 0.5, state.beta, 1.0), 0.0),
                         state.theta)
    start = repair_energy(inst, start, L.incident)
    if not np.any(alpha > 0.5):
        # U = e e^H with e the last unit vector
        return SurfaceState(alpha, np.zeros(inst.M), state.theta), 1.0
    U, ftrace = frozen_refine(inst, L, alpha, _u0(start), settings)
    if not ftrace.objectives:
        flags.append("refine-failed")
        return None, np.nan
    if not ftrace.converged:
        flags.append("refine-not-converged")
    try:
        cand = state_from_lift(inst, alpha, extract_rank_one(U, threshold=0.0, lifted=True))
    except ValueError:
        flags.append("extraction-failed")
        return None, np.nan
    return repair_energy(inst, cand, L.incident), float(rank_ratios([U])[0])


def _better(inst, a, b, beams, estimated):
    fa, fb = _feasible(inst, a, beams, estimated), _feasible(inst, b, beams, estimated)
    if fa != fb:
        return fa
    return _true_rate(inst, a, beams, estimated) > _true_rate(inst, b, beams, estimated)


def _candidate(inst, L, alpha, start, settings):
    """Frozen-mode refinement from `start`; None when it fails."""
    U, trace = frozen_refine(inst, L, alpha, _u0(start), settings)
    if not trace.objectives:
        return None
    try:
        cand = state_from_lift(inst, alpha, extract_rank_one(U, threshold=0.0, lifted=True))
    except ValueError:
        return None
    return repair_energy(inst, cand, L.incident)


def mode_search(inst: Instance, L: _Lifted, state: SurfaceState, beams, settings: Settings,
                estimated=False, flags=None):
    """Greedy harvest-to-amplify flips. The relaxed modes cannot leave zero by
    themselves, so the elements with the strongest cascaded gain that the
    harvest budget can still afford are tried one at a time; a flip is kept
    when the exact sum rate improves."""
    cs = inst.channels
    g = cs.g_est if estimated else cs.g
    gain = L.incident * np.sum(np.abs(g) ** 2, axis=0)
    best, best_rate = state, _true_rate(inst, state, beams, estimated)
    tried = 0
    while tried < settings.mode_trials:
        alpha = best.alpha
        order = [m for m in np.argsort(-gain, kind="stable") if alpha[m] < 0.5]
        order = [m for m in order if zero_output_margin(inst, _flip(alpha, m), L.incident) >= 0]
        if not order:
            break
        improved = False
        for m in order:
            if tried >= settings.mode_trials:
                break
            tried += 1
            new_alpha = _flip(alpha, m)
            beta = np.where(new_alpha > 0.5, np.where(alpha > 0.5, best.beta, min(1.0, inst.model.beta_cap)), 0.0)
            start = repair_energy(inst, SurfaceState(new_alpha, beta, best.theta), L.incident)
            cand = _candidate(inst, L, new_alpha, start, settings)
            if cand is None or not _feasible(inst, cand, beams, estimated):
                continue
            r = _true_rate(inst, cand, beams, estimated)
            if r > best_rate:
                best, best_rate, improved = cand, r, True
                if flags is not None:
                    flags.append(f"mode-flip-{m}")
                break
        if not improved:
            break
    return best


def _flip(alpha, m):
    a = np.asarray(alpha, float).copy()
    a[m] = 1.0 - a[m]
    return a


def _finish(inst, res: SurfaceResult, cand, beams, estimated):
    after = _true_rate(inst, cand, beams, estimated)
    res.sum_rate_after = after
    if after >= res.sum_rate_before and _feasible(inst, cand, beams, estimated):
        res.state = cand
        res.accepted = True
    else:
        res.flags.append("not-improving")
    return res
