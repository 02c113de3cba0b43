"""Constraint blocks shared by the beamforming and surface subproblems.

Units inside the conic programs: received powers are normalized by the user
noise sigma0^2, surface-side powers are in milliwatts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from ..conic import hermitian_part, leading_eigenpair, trace_ratio
from .model import SrocrState
from .rates import surrogate_slope

MW = 1e3


def logistic_aux(P_rf, energy):
    """C = 1 + exp(-a (P_rf - q)), the reciprocal of the normalized logistic."""
    return 1.0 + np.exp(-energy.a * (np.asarray(P_rf, float) - energy.q))


def add_rate_surrogates(prog, signal, interference, S0, I0, users):
    """Q_k <= first-order bound of log2(1 + signal/interference).

    signal[k], interference[k] are affine expressions in noise units; the
    auxiliaries are scaled by their expansion values S0, I0 so they sit near 1.
    """
    K = len(signal)
    Q = prog.var("Q", K)
    A = prog.var("A", K)
    B = prog.var("B", K)
    slope = surrogate_slope(S0 / I0)
    for k in range(K):
        if k not in users:
            prog.add("rate", Q[k] == 0, A[k] == 1, B[k] == 1)
            continue
        prog.add("signal", cp.inv_pos(A[k]) <= signal[k] / S0[k])
        prog.add("interference", B[k] >= interference[k] / I0[k])
        prog.add("rate", Q[k] <= np.log2(1 + S0[k] / I0[k]) - slope[k] * (A[k] - 1) - slope[k] * (B[k] - 1))
    return Q, A, B


def add_energy_block(prog, energy, C0, rf_mw, consumed_mw, out_mw, fixed_mw=0.0):
    """Self-sustainability written with the logistic auxiliaries and the
    first-order under-estimate of sum 1/C_m around C0; fixed_mw is harvest
    that does not depend on the variables."""
    n = rf_mw.shape[0] if hasattr(rf_mw, "shape") else len(rf_mw)
    kappa = MW * energy.Z / (1.0 - energy.Omega)
    if n == 0:
        prog.add("energy", fixed_mw >= consumed_mw + out_mw)
        return None, None
    zeta = prog.var("zeta", n)
    C = prog.var("C", n)
    C0 = np.asarray(C0, float)
    prog.add("rf", zeta <= rf_mw)
    prog.add("logistic", C >= 1 + cp.exp(energy.a * energy.q - energy.a / MW * zeta))
    c_lb = cp.sum(2.0 / C0 - cp.multiply(1.0 / C0 ** 2, C)) - n * energy.Omega
    prog.add("energy", kappa * c_lb + fixed_mw >= consumed_mw + out_mw)
    return zeta, C


def active_users(signal_scale, tol=0.0):
    """Users whose channel can carry any signal at all."""
    return {k for k, s in enumerate(signal_scale) if s > tol}


@dataclass
class StepResult:
    """Outcome of one convex solve inside the rank-one recovery loop."""
    point: object
    matrices: list
    objective: float
    slack: float = 0.0


@dataclass
class SrocrTrace:
    objectives: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    w: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    slacks: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False


def rank_ratios(matrices):
    return np.array([trace_ratio(hermitian_part(X)) for X in matrices])


def leading_directions(matrices):
    return [leading_eigenpair(hermitian_part(X), tol=1e-6)[1] for X in matrices]


def run_srocr(step, point, matrices, settings, max_iter=None, lazy=False):
    """Sequential rank-one constraint relaxation around a convex step.

    step(point, w, directions) returns a StepResult or None when the solve
    fails. The weights start at zero, are pushed towards one by delta after
    every success and delta is halved (keeping the old point) after a failure.
    With lazy=True the trace-ratio constraint is only imposed on matrices whose
    current ratio is below the target, and termination tests the ratios
    themselves instead of the weights.
    """
    max_iter = settings.max_inner if max_iter is None else max_iter
    st = SrocrState(w=np.zeros(len(matrices)), delta=settings.delta0,
                    delta0=settings.delta0, floor=settings.delta_floor, w_max=settings.w_max)
    trace = SrocrTrace()
    prev_obj = None
    ratios = rank_ratios(matrices)
    for _ in range(max_iter):
        w_used = np.where(ratios >= settings.rank_target, 0.0, st.w) if lazy else st.w.copy()
        res = step(point, w_used, leading_directions(matrices))
        if res is None:
            trace.statuses.append("rejected")
            w_before = st.w.copy()
            st.reject(ratios)
            # an unchanged weight would repeat the identical failed solve, unless
            # the step itself changes between calls (lazy mode is used with a penalty)
            repeat = not lazy and np.allclose(st.w, w_before, rtol=0, atol=1e-12)
            if st.stalled or repeat:
                trace.stalled = True
                break
            continue
        point, matrices = res.point, res.matrices
        ratios = rank_ratios(matrices)
        trace.statuses.append("accepted")
        trace.objectives.append(res.objective)
        trace.ratios.append(ratios)
        trace.w.append(w_used)
        trace.slacks.append(res.slack)
        st.accept(ratios)
        small = prev_obj is not None and abs(res.objective - prev_obj) <= settings.rel_tol * max(abs(prev_obj), 1.0)
        prev_obj = res.objective
        ranked = np.all(ratios >= settings.rank_target) if lazy else np.all(w_used >= settings.rank_target)
        if ranked and small and res.slack <= settings.slack_tol:
            trace.converged = True
            break
    return point, matrices, trace
