"""Problem instance and iterate containers shared by the optimizer stages."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..channel import ChannelSet
from ..energy import SurfaceModel, SurfaceState, beams_to_matrices, power_report
from ..scenario import EnergyParams, ScenarioConfig


@dataclass(frozen=True)
class Instance:
    """Everything a solve needs: channels, budgets, noise, surface model."""
    channels: ChannelSet
    P_max: float
    sigma0_sq: float
    sigma1_sq: float
    energy: EnergyParams
    model: SurfaceModel

    @classmethod
    def from_config(cls, config: ScenarioConfig, channels: ChannelSet, scheme="mf-ris"):
        return cls(channels, config.P_BS_max, config.sigma0_sq, config.sigma1_sq,
                   config.energy, scheme_model(scheme, config))

    @property
    def K(self):
        return self.channels.K

    @property
    def N(self):
        return self.channels.N

    @property
    def M(self):
        return self.channels.M

    def with_channels(self, channels):
        return replace(self, channels=channels)

    def with_model(self, model):
        return replace(self, model=model)

    def report(self, state: SurfaceState, beams: "BeamformerState"):
        return power_report(state, self.channels.H, beams.F, self.energy, self.sigma1_sq, self.model)


def scheme_model(scheme, config: ScenarioConfig) -> SurfaceModel:
    if scheme in ("mf-ris", "non-robust"):
        return SurfaceModel.mf(config.energy, config.beta_max)
    if scheme == "self-sustainable":
        return SurfaceModel.self_sustainable(config.energy)
    if scheme == "reflecting-only":
        return SurfaceModel.reflecting_only()
    if scheme == "no-ris":
        return SurfaceModel("no-ris", 0.0, 0.0, 0.0, 0.0, energy_constrained=False, fixed_alpha=True)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class BeamformerState:
    f: np.ndarray                      # (K, N)

    @property
    def F(self):
        return beams_to_matrices(self.f)

    @property
    def power(self):
        return float(np.sum(np.abs(self.f) ** 2))

    @classmethod
    def zeros(cls, K, N):
        return cls(np.zeros((K, N), complex))


@dataclass
class AuxiliarySet:
    """Auxiliary values of the last accepted subproblem (normalized units)."""
    Q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    A: np.ndarray = field(default_factory=lambda: np.zeros(0))
    B: np.ndarray = field(default_factory=lambda: np.zeros(0))
    C: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zeta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d_bar: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class SrocrState:
    w: np.ndarray
    delta: float
    delta0: float = 0.1
    floor: float = 1e-8
    iteration: int = 0
    w_max: float = 0.999       # w = 1 leaves the cone without an interior

    def accept(self, ratios):
        self.delta = self.delta0
        self.w = np.minimum(self.w_max, np.asarray(ratios) + self.delta)
        self.iteration += 1

    def reject(self, ratios):
        self.delta /= 2
        self.w = np.minimum(self.w_max, np.asarray(ratios) + self.delta)
        self.iteration += 1

    @property
    def stalled(self):
        return self.delta < self.floor


@dataclass
class PenaltyState:
    rho: float = 1e-3
    epsilon: float = 10.0
    rho_max: float = 1e3
    T_max: int = 30

    def grow(self):
        self.rho = min(self.epsilon * self.rho, self.rho_max)


@dataclass(frozen=True)
class Settings:
    """Stopping rules and schedules of the iterative solvers."""
    delta0: float = 0.1
    delta_floor: float = 1e-8
    rank_target: float = 0.999
    w_max: float = 0.999
    rel_tol: float = 1e-3
    slack_tol: float = 1e-6
    binary_tol: float = 1e-3
    rho0: float = 1e-3
    epsilon: float = 10.0
    rho_max: float = 1e3
    T_max: int = 30
    max_restarts: int = 1
    mode_trials: int = 3       # harvest-to-amplify flips tried per surface update
    max_inner: int = 60
    max_outer: int = 30
    outer_tol: float = 1e-3
