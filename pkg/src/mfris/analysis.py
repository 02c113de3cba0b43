"""Closed-form single-antenna, single-user analysis with a LoS surface link.

The surface has M elements, M_A of them amplifying and M_H = M - M_A
harvesting.  The total harvested power ``sumPA`` is an explicit input; use
:func:`sum_harvest_los` to obtain it from the logistic harvester.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .energy import harvested_power
from .scenario import EnergyParams

AMPLIFICATION_LIMITED = "amplification-limited"
POWER_LIMITED = "power-limited"


@dataclass(frozen=True)
class AnalysisParams:
    P_BS_max: float
    M: int
    M_A: int
    h_sq: float
    g_sq: float
    sigma0_sq: float
    sigma1_sq: float
    beta_max: float
    energy: EnergyParams
    sumPA: float

    def __post_init__(self):
        if not 0 <= self.M_A <= self.M:
            raise ValueError(f"M_A={self.M_A} outside [0, M={self.M}]")
        for name in ("P_BS_max", "h_sq", "g_sq", "sigma0_sq", "sigma1_sq"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def M_H(self):
        return self.M - self.M_A

    def at(self, M_A):
        return replace(self, M_A=int(M_A))

    # derived constants; M_H enters W1 through the conversion circuits
    def W1(self, M_A=None):
        M_A = self.M_A if M_A is None else M_A
        return self.sumPA - (self.M - M_A) * self.energy.P_C

    @property
    def W2(self):
        return self.energy.P_b + self.energy.P_DC

    @property
    def W3(self):
        return self.sigma1_sq * self.g_sq

    @property
    def W4(self):
        return self.energy.xi * self.sigma0_sq * (self.P_BS_max * self.h_sq + self.sigma1_sq)

    def W5(self, M_A=None):
        return self.W2 * self.sigma0_sq + self.W1(M_A) * self.W3 + self.W4


@dataclass(frozen=True)
class SisoSolution:
    p_star: float
    theta_star: np.ndarray
    beta_star: float
    branch: str
    gamma: float
    feasible: bool = True


class SnrResult(NamedTuple):
    gamma: float
    feasible: bool
    branch: str | None = None


class SeResult(NamedTuple):
    gamma: float
    feasible: bool
    M_A_opt: int


def output_power_budget(p: AnalysisParams, M_A=None):
    """Largest output power the harvest can pay for with M_A amplifying elements."""
    M_A = p.M_A if M_A is None else M_A
    e = p.energy
    return (p.sumPA - M_A * (e.P_b + e.P_DC) - (p.M - M_A) * e.P_C) / e.xi


def amplification_boundary(p: AnalysisParams, M_A=None):
    """M_{A,1}: above it the energy budget, not beta_max, limits the gain."""
    e = p.energy
    return p.W1(M_A) / (e.xi * p.beta_max * (p.P_BS_max * p.h_sq + p.sigma1_sq) + e.P_b + e.P_DC)


def optimal_amplitude(p: AnalysisParams):
    """(beta*, branch, feasible) for the current split."""
    if p.M_A == 0:
        return 0.0, AMPLIFICATION_LIMITED, p.sumPA - p.M * p.energy.P_C >= 0
    if p.M_A <= amplification_boundary(p):
        return p.beta_max, AMPLIFICATION_LIMITED, True
    po = output_power_budget(p)
    if po < 0:
        return 0.0, POWER_LIMITED, False
    return po / (p.M_A * (p.P_BS_max * p.h_sq + p.sigma1_sq)), POWER_LIMITED, True


def _gamma(p: AnalysisParams, beta):
    num = p.P_BS_max * beta * p.h_sq * p.g_sq * p.M_A ** 2
    return num / (beta * p.sigma1_sq * p.g_sq * p.M_A + p.sigma0_sq)


def optimal_siso_solution(p: AnalysisParams, g_vec=None, h_vec=None) -> SisoSolution:
    """Optimal power, phases and common amplitude for the amplifying elements."""
    if p.M_A < 1:
        raise ValueError("need at least one amplifying element")
    if g_vec is None or h_vec is None:
        theta = np.zeros(p.M)
    else:
        theta = np.mod(np.angle(g_vec) - np.angle(h_vec), 2 * np.pi)
    beta, branch, ok = optimal_amplitude(p)
    return SisoSolution(p.P_BS_max, theta, beta, branch, _gamma(p, beta) if ok else 0.0, ok)


def snr_mf(p: AnalysisParams) -> SnrResult:
    """Best SNR of the MF surface for the split in ``p``."""
    if p.M_A == 0:
        return SnrResult(0.0, p.sumPA - p.M * p.energy.P_C >= 0, None)
    beta, branch, ok = optimal_amplitude(p)
    if not ok:
        return SnrResult(0.0, False, branch)
    if branch == AMPLIFICATION_LIMITED:
        return SnrResult(_gamma(p, p.beta_max), True, branch)
    po = output_power_budget(p)
    a = p.P_BS_max * p.h_sq + p.sigma1_sq
    g = p.P_BS_max * p.h_sq * p.g_sq * po * p.M_A / (p.sigma1_sq * p.g_sq * po + p.sigma0_sq * a)
    return SnrResult(g, True, branch)


def snr_se(p: AnalysisParams) -> SeResult:
    """Self-sustainable passive surface: SNR for the split and its best split."""
    e = p.energy
    gamma = p.P_BS_max * p.h_sq * p.g_sq * p.M_A ** 2 / p.sigma0_sq
    ok = lambda m: m * e.P_b + (p.M - m) * e.P_C <= p.sumPA
    feasible = ok(p.M_A)
    # floor(W1 / P_b) with W1 taken at its own split: m (P_b - P_C) <= sumPA - M P_C
    if e.P_b > e.P_C:
        best = int(np.clip(math.floor(p.W1(0) / (e.P_b - e.P_C)), 0, p.M))
        while best < p.M and ok(best + 1):          # rounding guard
            best += 1
        while best > 0 and not ok(best):
            best -= 1
    else:
        best = p.M if ok(p.M) else 0
    return SeResult(gamma, feasible, best)


def _mbar(p: AnalysisParams, M_A):
    W1, W2, W3, W4 = p.W1(M_A), p.W2, p.W3, p.W4
    m1 = amplification_boundary(p, M_A)
    m2 = (W1 * W3 + W4 - math.sqrt(max(W1 * W3 * W4 + W4 ** 2, 0.0))) / (W2 * W3)
    return max(m1, m2), m1, m2


def stationary_split(p: AnalysisParams, iters=6):
    """Real-valued maximizer max(M_{A,1}, M_{A,2}).

    W1 depends on the split through M_H, so the formulas are evaluated at
    their own output until it settles (the dependence is weak: P_C is tiny).
    """
    x = float(p.M_A)
    for _ in range(iters):
        x_new, m1, m2 = _mbar(p, x)
        if abs(x_new - x) < 1e-12 * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new
    return x, m1, m2


def optimal_elements_mf(p: AnalysisParams) -> int:
    """Optimal number of amplifying elements (floor/ceil of the stationary point)."""
    if p.M < 1:
        raise ValueError("need M >= 1")
    x, _, _ = stationary_split(p)
    lo = int(np.clip(math.floor(x), 0, p.M))
    hi = int(np.clip(math.ceil(x), 0, p.M))
    g_lo, g_hi = snr_mf(p.at(lo)), snr_mf(p.at(hi))
    v_lo = g_lo.gamma if g_lo.feasible else -math.inf
    v_hi = g_hi.gamma if g_hi.feasible else -math.inf
    return hi if v_hi > v_lo else lo


def _threshold(p: AnalysisParams, M_A):
    W1, W2, W3, W5 = p.W1(M_A), p.W2, p.W3, p.W5(M_A)
    disc = W5 ** 2 - 4 * W1 * W2 * W3 * p.sigma0_sq
    if disc < 0:
        return None, None
    t1 = (p.beta_max - 1) * p.sigma0_sq / (p.beta_max * W3)
    t2 = (W5 - math.sqrt(disc)) / (2 * W2 * W3)
    return t1, t2


def crossover_threshold(p: AnalysisParams, iters=6):
    """Largest M_A (real) for which the MF surface beats the self-sustainable one.

    Returns None when the discriminant is negative (no crossover in closed form).
    """
    x = float(p.M_A)
    for _ in range(iters):
        t1, t2 = _threshold(p, x)
        if t1 is None:
            return None
        x_new = min(t1, t2)
        if abs(x_new - x) < 1e-12 * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def crossover_terms(p: AnalysisParams):
    """Both closed-form candidates (t1, t2) at the self-consistent threshold."""
    th = crossover_threshold(p)
    return _threshold(p, p.M_A if th is None else th)


# ---------------------------------------------------------------- helpers

def sum_harvest_los(P_BS_max, h_sq, sigma1_sq, M_H, energy: EnergyParams):
    """Total harvest of M_H elements each seeing RF power P h^2 + sigma1^2."""
    return float(M_H * harvested_power(P_BS_max * h_sq + sigma1_sq, energy))


def backsolve_output_power(p: AnalysisParams, gamma_target):
    """Output power that makes the power-limited SNR equal gamma_target."""
    a = p.P_BS_max * p.h_sq + p.sigma1_sq
    c = p.P_BS_max * p.h_sq * p.g_sq * p.M_A
    d = p.sigma1_sq * p.g_sq
    if gamma_target * d >= c:
        raise ValueError("target SNR beyond the power-limited asymptote")
    return gamma_target * p.sigma0_sq * a / (c - gamma_target * d)


def sumpa_for_output_power(p: AnalysisParams, P_O):
    """Harvest needed so that the output power budget equals P_O."""
    e = p.energy
    return e.xi * P_O + p.M_A * (e.P_b + e.P_DC) + p.M_H * e.P_C


# ---------------------------------------------------------------- worked example

EXAMPLE_SNR_DB = 33.2          # reported MF SNR of the worked example at M_A = 10


def example_params(M_A=10, sumPA=None) -> AnalysisParams:
    """Worked single-user example: P = 5 W, M = 300, noise -70 dBm, h^2 = -45 dB,
    g^2 = -60 dB, beta_max = 13 dB.  Its harvested power is not stated, so by
    default it is back-solved from the reported MF SNR at M_A = 10."""
    p = AnalysisParams(P_BS_max=5.0, M=300, M_A=10, h_sq=10 ** -4.5, g_sq=1e-6,
                       sigma0_sq=1e-10, sigma1_sq=1e-10, beta_max=10 ** 1.3,
                       energy=EnergyParams(xi=1.1, P_b=1.5e-3, P_DC=0.3e-3, P_C=2.1e-6), sumPA=0.0)
    if sumPA is None:
        sumPA = sumpa_for_output_power(p, backsolve_output_power(p, 10 ** (EXAMPLE_SNR_DB / 10)))
    return replace(p, sumPA=float(sumPA)).at(M_A)
