"""Empirical check of the worst-case guarantees by sampling channel errors."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..channel import sample_uncertainty
from ..energy import SurfaceState, power_report
from ..optimizer.common import MW
from ..optimizer.model import BeamformerState, Instance
from .blocks import Certificate, RobustData, certify


@dataclass
class ValidationReport:
    n_samples: int
    tol: float
    certificate: Certificate
    rows: list = field(default_factory=list)          # (draw, constraint, violation) above tol
    worst: dict = field(default_factory=dict)         # constraint -> largest violation seen
    worst_sinr: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def violations(self):
        return len(self.rows)

    @property
    def clean(self):
        return not self.rows

    @property
    def worst_violation(self):
        return max(self.worst.values(), default=0.0)

    @property
    def certified_sinr(self):
        return self.certificate.sinr

    def summary(self):
        return (f"{self.n_samples} draws, {self.violations} violations, "
                f"worst {self.worst_violation:.3e}; worst SINR {np.round(self.worst_sinr, 6).tolist()} "
                f"vs certified {np.round(self.certified_sinr, 6).tolist()}")


def write_violations_csv(report: ValidationReport, path):
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["draw", "constraint", "violation"])
            for draw, name, v in report.rows:
                w.writerow([draw, name, f"{v:.9g}"])
    except OSError as exc:
        raise OSError(f"cannot write violation report to {path}: {exc}") from exc
    return path


def _rel(excess, scale):
    """Violation relative to the size of the bound it is checked against."""
    return float(excess) / max(abs(float(scale)), 1.0)


def validate_by_sampling(inst: Instance, state: SurfaceState, beams: BeamformerState, n_samples,
                         rng, certificate: Certificate | None = None, cascade_mode="independent",
                         nominal=False, tol=1e-6) -> ValidationReport:
    """Draw n_samples errors inside the balls and check, at every draw, that
    the signal, interference-plus-noise, incident and output powers respect
    their certified bounds and that the surface sustains itself.

    Without a certificate one is computed for (state, beams); nominal=True
    certifies against zero radii instead, which is how a solution that
    trusts the estimates is judged.
    """
    data = RobustData.from_instance(inst)
    phi = beams.f / np.sqrt(inst.P_max)
    if certificate is None:
        certificate = certify(data.nominal() if nominal else data, state.alpha, state.coefficients, phi)
    cs = inst.channels
    K, M = cs.K, cs.M
    c = state.coefficients if M else np.zeros(0, complex)
    scale = inst.P_max / inst.sigma0_sq
    energy = inst.model.energy_constrained and M > 0
    harvest = np.flatnonzero(state.alpha < 0.5)
    report = ValidationReport(n_samples, tol, certificate, worst_sinr=np.full(K, np.inf))

    def check(draw, name, v):
        report.worst[name] = max(report.worst.get(name, -np.inf), v)
        if v > tol:
            report.rows.append((draw, name, v))

    S_c, I_c = certificate.S, certificate.I
    for draw in range(n_samples):
        p = sample_uncertainty(cs, rng, cascade_mode)
        for k in range(K):
            row = np.conj(cs.h_est[k] + p.dh[k])
            if M:
                row = row + c @ (cs.G_est[k] + p.dG[k])
            amp = row @ phi.T                                  # amplitudes of every beam at user k
            sig = scale * abs(amp[k]) ** 2
            noise = np.sum(np.abs(np.conj(cs.g_est[k] + p.dg[k]) * c) ** 2) * inst.sigma1_sq / inst.sigma0_sq if M else 0.0
            inn = scale * (np.sum(np.abs(amp) ** 2) - abs(amp[k]) ** 2) + noise + 1.0
            check(draw, f"signal-{k}", _rel(S_c[k] - sig, S_c[k]))
            check(draw, f"interference-{k}", _rel(inn - I_c[k], I_c[k]))
            sinr = sig / inn
            report.worst_sinr[k] = min(report.worst_sinr[k], sinr)
            bound = max(S_c[k], 0.0) / I_c[k]
            check(draw, f"sinr-{k}", _rel(bound - sinr, bound))
        if energy:
            H = cs.H_est + p.dH
            rep = power_report(state, H, beams.F, inst.energy, inst.sigma1_sq, inst.model)
            incident = MW * np.einsum("mi,ij,mj->m", H, sum(beams.F), H.conj()).real + MW * inst.sigma1_sq
            for m in harvest:
                check(draw, f"incident-{m}", _rel(certificate.rf_mw[m] - incident[m], certificate.rf_mw[m]))
            check(draw, "output", _rel(MW * rep.P_O - certificate.W_mw, certificate.W_mw))
            check(draw, "energy", _rel(-MW * rep.margin, MW * rep.consumed))
    return report
