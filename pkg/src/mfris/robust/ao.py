"""Alternating optimization under bounded channel uncertainty."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..energy import SurfaceState
from ..optimizer.ao import initial_state, mrt_beams, rzf_beams
from ..optimizer.model import BeamformerState, Instance, Settings
from .blocks import Certificate, RobustData, RobustSlacks
from .programs import RobustPoint, solve_robust_beamforming, solve_robust_ris


@dataclass
class RobustResult:
    state: SurfaceState
    beams: BeamformerState
    certificate: Certificate
    sum_rate: float                      # certified worst-case sum rate
    feasible: bool
    converged: bool
    trace: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    slacks: RobustSlacks | None = None


def to_state(data: RobustData, point: RobustPoint):
    """SurfaceState and BeamformerState of an iterate (beams in sqrt(W))."""
    state = SurfaceState.from_coefficients(point.alpha, point.c)
    beams = BeamformerState(point.phi * np.sqrt(data.inst.P_max))
    return state, beams


def from_state(data: RobustData, state: SurfaceState, beams: BeamformerState):
    return RobustPoint.at(data, state.alpha, state.coefficients, beams.f / np.sqrt(data.inst.P_max))


def _start(data: RobustData, state: SurfaceState):
    """Maximum-ratio or regularized zero-forcing beams on the estimates,
    whichever has the higher certified rate (the beam step restores a
    missing energy margin)."""
    inst = data.inst
    cands = [from_state(data, state, b(inst, state, estimated=True)) for b in (mrt_beams, rzf_beams)]
    return max(cands, key=lambda p: (p.sum_rate, p.feasible))


def robust_initialize(data: RobustData, rng):
    """Random phases and alternating modes; amplifiers switch to harvesting,
    strongest certified incident power first, while the certified energy
    margin is negative."""
    inst = data.inst
    state = initial_state(inst, rng)
    point = _start(data, state)
    if not inst.model.energy_constrained:
        return point
    while not point.feasible and np.any(point.alpha > 0.5):
        idx = np.flatnonzero(point.alpha > 0.5)
        m = idx[np.argmax(point.cert.rf_mw[idx])]
        alpha = point.alpha.copy()
        alpha[m] = 0.0
        state = SurfaceState(alpha, np.where(alpha > 0.5, state.beta, 0.0), state.theta)
        point = _start(data, state)
    return point


def robust_alternating_optimize(inst: Instance, settings: Settings | None = None, rng=None,
                                max_outer=None, state: SurfaceState | None = None,
                                beams: BeamformerState | None = None) -> RobustResult:
    """Alternate the robust beamforming and surface steps on the estimated
    channels. The certified sum rate of the accepted iterates never drops."""
    settings = settings or Settings()
    max_outer = settings.max_outer if max_outer is None else max_outer
    data = RobustData.from_instance(inst)
    if state is None or beams is None:
        point = robust_initialize(data, np.random.default_rng(0) if rng is None else rng)
    else:
        point = from_state(data, state, beams)
    flags = [] if point.feasible else ["infeasible-start"]
    trace = []
    converged = False
    slacks = None
    for it in range(max_outer):
        entry = {"outer": it}
        bf = solve_robust_beamforming(data, point, settings)
        if bf.accepted:
            point = bf.point
        slacks = bf.multipliers or slacks
        entry["beam_flags"] = list(bf.flags)
        if not point.feasible:
            flags.append("infeasible")
            entry.update(sum_rate=point.sum_rate, flags=entry["beam_flags"])
            trace.append(entry)
            break
        ris = solve_robust_ris(data, point, settings)
        if ris.accepted:
            point = ris.point
        slacks = ris.multipliers or slacks
        entry.update(
            sum_rate=point.sum_rate,
            margin=point.cert.margin,
            alpha=point.alpha.tolist(),
            slack=ris.slacks[-1] if ris.slacks else 0.0,
            modulus_residual=max(ris.residuals, default=0.0),
            flags=entry["beam_flags"] + list(ris.flags),
        )
        trace.append(entry)
        if it > 0 and abs(point.sum_rate - trace[-2]["sum_rate"]) <= settings.outer_tol * max(abs(trace[-2]["sum_rate"]), 1.0):
            converged = True
            break
    st, bm = to_state(data, point)
    return RobustResult(st, bm, point.cert, point.sum_rate, point.feasible, converged, trace, flags, slacks)

