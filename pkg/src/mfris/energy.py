"""Nonlinear energy harvesting and MF-RIS power accounting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .scenario import EnergyParams

MARGIN_TOL = 1e-9          # W; energy constraint counted as met above -MARGIN_TOL


@dataclass(frozen=True)
class SurfaceState:
    """Per-element mode (1 = amplify, 0 = harvest), power gain and phase."""
    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, float).ravel()
        b = np.asarray(self.beta, float).ravel()
        t = np.mod(np.asarray(self.theta, float).ravel(), 2 * np.pi)
        if not (a.shape == b.shape == t.shape):
            raise ValueError("alpha, beta and theta must have the same length")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "theta", t)

    @property
    def M(self):
        return self.alpha.size

    @property
    def coefficients(self):
        """Diagonal of Theta: alpha * sqrt(beta) * exp(j theta)."""
        return self.alpha * np.sqrt(self.beta) * np.exp(1j * self.theta)

    @property
    def Theta(self):
        return np.diag(self.coefficients)

    @property
    def n_amplify(self):
        return int(np.sum(self.alpha > 0.5))

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z, z, z)

    @classmethod
    def from_coefficients(cls, alpha, coeffs, beta_fill=0.0):
        """State whose Theta diagonal equals alpha * coeffs (harvesting entries get beta_fill)."""
        alpha = np.asarray(alpha, float)
        c = np.asarray(coeffs, complex)
        beta = np.where(alpha > 0.5, np.abs(c) ** 2, beta_fill)
        return cls(alpha, beta, np.angle(c))

    def check(self, beta_max, tol=1e-12):
        """Raise if alpha is not binary or beta is out of [0, beta_max]."""
        if not np.all((self.alpha == 0) | (self.alpha == 1)):
            raise ValueError("alpha must be binary")
        if np.any(self.beta < -tol) or np.any(self.beta > beta_max * (1 + tol)):
            raise ValueError("beta outside [0, beta_max]")


@dataclass(frozen=True)
class SurfaceModel:
    """Which elements may do what, and what they cost.

    amp_cost is charged per amplifying/reflecting element, out_weight multiplies
    the output power (xi for an active amplifier, 0 for passive reflection).
    """
    name: str
    beta_cap: float
    amp_cost: float
    circuit_cost: float
    out_weight: float
    energy_constrained: bool = True
    fixed_alpha: bool = False

    @classmethod
    def mf(cls, energy: EnergyParams, beta_max):
        return cls("mf-ris", float(beta_max), energy.P_b + energy.P_DC, energy.P_C, energy.xi)

    @classmethod
    def self_sustainable(cls, energy: EnergyParams):
        # same energy budget as MF-RIS, gains capped at 1, so it is a
        # restriction of the MF-RIS feasible set
        return cls("self-sustainable", 1.0, energy.P_b + energy.P_DC, energy.P_C, energy.xi)

    @classmethod
    def reflecting_only(cls):
        return cls("reflecting-only", 1.0, 0.0, 0.0, 0.0, energy_constrained=False, fixed_alpha=True)

    def consumed(self, alpha, P_O):
        alpha = np.asarray(alpha, float)
        M = alpha.size
        n = float(np.sum(alpha))
        return n * self.amp_cost + (M - n) * self.circuit_cost + self.out_weight * P_O


@dataclass(frozen=True)
class PowerReport:
    P_RF_per_element: np.ndarray
    P_A_per_element: np.ndarray
    P_O: float
    consumed: float
    margin: float

    @property
    def harvested(self):
        return float(np.sum(self.P_A_per_element))

    @property
    def feasible(self):
        return self.margin >= -MARGIN_TOL


def _sum_F(F, N=None):
    F = [np.asarray(x, complex) for x in F]
    if not F:
        return np.zeros((N or 0, N or 0), complex)
    S = sum(F)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("beamforming matrices must be square")
    return S


def beams_to_matrices(f):
    """Rank-one lifts f_k f_k^H for the rows of f (K x N)."""
    f = np.atleast_2d(np.asarray(f, complex))
    return [np.outer(x, x.conj()) for x in f]


def received_rf_power(H, F, sigma1_sq, alpha, m=None):
    """RF power entering the harvester of element m (all elements if m is None)."""
    H = np.asarray(H, complex)
    S = _sum_F(F, H.shape[1] if H.ndim == 2 else None)
    if H.ndim != 2 or H.shape[1] != S.shape[0]:
        raise ValueError(f"H with shape {H.shape} does not match F of size {S.shape}")
    alpha = np.asarray(alpha, float)
    if alpha.shape != (H.shape[0],):
        raise ValueError("alpha length must equal the number of rows of H")
    quad = np.einsum("mi,ij,mj->m", H, S, H.conj()).real
    p = (1.0 - alpha) * (np.maximum(quad, 0.0) + sigma1_sq)
    return p if m is None else float(p[m])


def harvested_power(P_rf, params: EnergyParams):
    """Logistic harvester normalized to give zero output at zero input."""
    P_rf = np.asarray(P_rf, float)
    Z, a, q, Om = params.Z, params.a, params.q, params.Omega
    ups = Z * expit(a * (P_rf - q))
    out = (ups - Z * Om) / (1 - Om)
    out = np.where(P_rf == 0, 0.0, np.clip(out, 0.0, None))
    return float(out) if out.ndim == 0 else out


def output_power(Theta, H, F, sigma1_sq):
    """Tr(Theta (H sum(F) H^H + sigma1^2 I) Theta^H)."""
    Theta = np.asarray(Theta, complex)
    H = np.asarray(H, complex)
    if Theta.ndim == 1:
        Theta = np.diag(Theta)
    S = _sum_F(F, H.shape[1])
    if Theta.shape != (H.shape[0], H.shape[0]) or S.shape[0] != H.shape[1]:
        raise ValueError("dimension mismatch between Theta, H and F")
    R = H @ S @ H.conj().T + sigma1_sq * np.eye(H.shape[0])
    return float(max(np.trace(Theta @ R @ Theta.conj().T).real, 0.0))


def power_report(state: SurfaceState, H, F, params: EnergyParams, sigma1_sq,
                 model: SurfaceModel | None = None) -> PowerReport:
    if model is None:
        model = SurfaceModel(name="mf-ris", beta_cap=np.inf, amp_cost=params.P_b + params.P_DC,
                             circuit_cost=params.P_C, out_weight=params.xi)
    M = state.M
    if M == 0:
        return PowerReport(np.zeros(0), np.zeros(0), 0.0, 0.0, 0.0)
    prf = received_rf_power(H, F, sigma1_sq, state.alpha)
    pa = np.where(state.alpha > 0.5, 0.0, harvested_power(prf, params))
    po = output_power(state.coefficients, H, F, sigma1_sq)
    used = model.consumed(state.alpha, po)
    if not model.energy_constrained:
        return PowerReport(prf, np.zeros(M), po, used, np.inf)
    return PowerReport(prf, pa, po, used, float(np.sum(pa) - used))


def sustainability_margin(state: SurfaceState, H, F, params: EnergyParams, sigma1_sq,
                          model: SurfaceModel | None = None):
    """Harvested minus consumed power in watts; feasible when >= -MARGIN_TOL."""
    return power_report(state, H, F, params, sigma1_sq, model).margin
