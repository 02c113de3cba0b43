"""Channel realizations: path loss, ULA steering vectors, Rician fading and
bounded estimation errors.

Conventions: ``h[k]`` (length N) and ``g[k]`` (length M) are column vectors
whose Hermitian transposes are the BS->user and RIS->user channels, ``H``
(M x N) is BS->RIS, and the cascaded channel is G_k = diag(g_k^H) H.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .scenario import ScenarioConfig

RICIAN_CAP = 1e12


def path_loss(distance, exponent, ref_loss_db=-20.0):
    """Large-scale power gain 10^(ref/10) * d^-exponent (d >= 1 m)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 1.0):
        raise ValueError(f"distance below the 1 m reference distance: {distance}")
    out = 10.0 ** (ref_loss_db / 10.0) * d ** (-float(exponent))
    return float(out) if out.ndim == 0 else out


def steering_vector(count, azimuth, elevation, spacing=0.5):
    """Uniform linear array response; entry m has phase 2*pi*spacing*m*sin(el)*cos(az)."""
    if count < 1:
        raise ValueError("steering vector needs at least one element")
    m = np.arange(count)
    return np.exp(1j * 2 * np.pi * spacing * m * np.sin(elevation) * np.cos(azimuth))


def direction_angles(src, dst):
    """Azimuth and elevation (polar angle from +z) of the vector dst - src."""
    d = np.asarray(dst, float) - np.asarray(src, float)
    r = np.linalg.norm(d)
    if r == 0:
        return 0.0, 0.0
    return float(np.arctan2(d[1], d[0])), float(np.arccos(np.clip(d[2] / r, -1.0, 1.0)))


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def uniform_ball(rng, radius, shape):
    """Complex array uniformly distributed in the Frobenius ball of given radius."""
    x = crandn(rng, *shape)
    n = np.linalg.norm(x)
    if radius <= 0 or n == 0:
        return np.zeros(shape, dtype=complex)
    dim = 2 * x.size                      # real dimension of the ball
    r = radius * rng.random() ** (1.0 / dim)
    return x * (r / n)


def rician(rng, gain, los, factor):
    """sqrt(gain) * (sqrt(K/(1+K)) LoS + sqrt(1/(1+K)) CN(0,1))."""
    factor = min(float(factor), RICIAN_CAP)
    nlos = crandn(rng, *los.shape)
    return np.sqrt(gain) * (np.sqrt(factor / (1 + factor)) * los + np.sqrt(1 / (1 + factor)) * nlos)


@dataclass(frozen=True)
class SisoChannelParams:
    """Single-antenna LoS setup: h = h a(psi), g = g a(phi)."""
    h_sq: float
    g_sq: float
    psi_a: float = 0.0
    psi_e: float = 0.0
    phi_a: float = 0.0
    phi_e: float = 0.0

    def __post_init__(self):
        if not (self.h_sq > 0 and self.g_sq > 0):
            raise ValueError("h_sq and g_sq must be positive")

    def vectors(self, M, spacing=0.5):
        h = np.sqrt(self.h_sq) * steering_vector(M, self.psi_a, self.psi_e, spacing)
        g = np.sqrt(self.g_sq) * steering_vector(M, self.phi_a, self.phi_e, spacing)
        return h, g

    def channel_set(self, M, direct_sq=0.0, spacing=0.5):
        """ChannelSet for N = K = 1 with the direct link of power ``direct_sq``."""
        hv, gv = self.vectors(M, spacing)
        H = hv.reshape(M, 1)
        h = np.full((1, 1), np.sqrt(direct_sq), dtype=complex)
        return ChannelSet.perfect(h, gv.reshape(1, M), H)


@dataclass(frozen=True)
class ChannelSet:
    h: np.ndarray            # (K, N)
    g: np.ndarray            # (K, M)
    H: np.ndarray            # (M, N)
    h_est: np.ndarray
    g_est: np.ndarray
    H_est: np.ndarray
    xi_h: np.ndarray         # (K,)
    xi_g: np.ndarray         # (K,)
    xi_H: float
    xi_G: np.ndarray         # (K,)

    @classmethod
    def perfect(cls, h, g, H):
        h = np.atleast_2d(np.asarray(h, complex))
        g = np.asarray(g, complex).reshape(h.shape[0], -1)
        H = np.asarray(H, complex).reshape(g.shape[1], h.shape[1])
        K = h.shape[0]
        z = np.zeros(K)
        return cls(h, g, H, h.copy(), g.copy(), H.copy(), z, z.copy(), 0.0, z.copy())

    @property
    def K(self):
        return self.h.shape[0]

    @property
    def N(self):
        return self.h.shape[1]

    @property
    def M(self):
        return self.H.shape[0]

    @property
    def G(self):
        return cascade(self.g, self.H)

    @property
    def G_est(self):
        return cascade(self.g_est, self.H_est)

    def estimates_as_truth(self):
        """The estimated channels treated as if they were exact."""
        return ChannelSet.perfect(self.h_est, self.g_est, self.H_est)

    def perturbed(self, p):
        """True channels replaced by estimates plus a sampled error."""
        return replace(self, h=self.h_est + p.dh, g=self.g_est + p.dg, H=self.H_est + p.dH)

    def scaled(self, factor):
        f = complex(factor)
        return replace(self, h=self.h * f, g=self.g * f, h_est=self.h_est * f, g_est=self.g_est * f,
                       xi_h=self.xi_h * abs(f), xi_g=self.xi_g * abs(f), xi_G=self.xi_G * abs(f))


def cascade(g, H):
    """G_k = diag(g_k^H) H for each row of g; shape (K, M, N)."""
    return np.conj(g)[:, :, None] * H[None, :, :]


def cascade_radius(xi_H, xi_g, g_est, H_est):
    """Cauchy-Schwarz bound on ||G_k - G~_k||_F."""
    return xi_H * np.linalg.norm(g_est, axis=1) + xi_g * np.linalg.norm(H_est) + xi_g * xi_H


def user_positions(config: ScenarioConfig, rng):
    """K points uniform in area over the horizontal disc around user_center."""
    g = config.geometry
    r = g.user_radius * np.sqrt(rng.random(config.K))
    phi = 2 * np.pi * rng.random(config.K)
    c = np.asarray(g.user_center, float)
    return np.stack([c[0] + r * np.cos(phi), c[1] + r * np.sin(phi), np.full(config.K, c[2])], axis=1)


def generate_channel_set(config: ScenarioConfig, rng, users=None) -> ChannelSet:
    """One channel realization.

    The Rician draw is taken as the estimate; the true channel is the
    estimate plus an error drawn uniformly from the ball whose radius is
    kappa times the estimate norm, so both norm-ball relations hold exactly.
    """
    g = config.geometry
    N, K, M = config.N, config.K, config.M
    if users is None:
        users = user_positions(config, rng)
    bs, ris = np.asarray(g.bs, float), np.asarray(g.ris, float)

    d_br = max(np.linalg.norm(ris - bs), 1.0)
    az_t, el_t = direction_angles(bs, ris)
    az_r, el_r = direction_angles(ris, bs)
    los_H = np.outer(steering_vector(M, az_r, el_r, g.spacing),
                     steering_vector(N, az_t, el_t, g.spacing).conj()) if M > 0 else np.zeros((0, N))
    H = rician(rng, path_loss(d_br, g.exp_bs_ris, g.ref_loss_db), los_H, g.rician_bs_ris)

    h = np.zeros((K, N), complex)
    gg = np.zeros((K, M), complex)
    for k in range(K):
        u = users[k]
        d_bu = max(np.linalg.norm(u - bs), 1.0)
        h[k] = rician(rng, path_loss(d_bu, g.exp_bs_user, g.ref_loss_db),
                      steering_vector(N, *direction_angles(bs, u), g.spacing), g.rician_bs_user)
        if M > 0:
            d_ru = max(np.linalg.norm(u - ris), 1.0)
            gg[k] = rician(rng, path_loss(d_ru, g.exp_ris_user, g.ref_loss_db),
                           steering_vector(M, *direction_angles(ris, u), g.spacing), g.rician_ris_user)

    unc = config.uncertainty
    xi_h = unc.kappa_h * np.linalg.norm(h, axis=1)
    xi_g = unc.kappa_g * np.linalg.norm(gg, axis=1)
    xi_H = unc.kappa_H * float(np.linalg.norm(H))
    xi_G = cascade_radius(xi_H, xi_g, gg, H)
    h_true = h + np.stack([uniform_ball(rng, xi_h[k], (N,)) for k in range(K)])
    g_true = gg + np.stack([uniform_ball(rng, xi_g[k], (M,)) for k in range(K)]) if M else gg.copy()
    H_true = H + uniform_ball(rng, xi_H, H.shape)
    return ChannelSet(h_true, g_true, H_true, h, gg, H, xi_h, xi_g, xi_H, xi_G)


@dataclass(frozen=True)
class Perturbation:
    dh: np.ndarray           # (K, N)
    dg: np.ndarray           # (K, M)
    dH: np.ndarray           # (M, N)
    dG: np.ndarray           # (K, M, N)


def sample_uncertainty(cs: ChannelSet, rng, cascade_mode="consistent") -> Perturbation:
    """One error realization inside the uncertainty balls around the estimates.

    cascade_mode 'consistent' derives dG from (dg, dH); 'independent' draws dG
    from its own ball of radius xi_G, as the optimization model assumes.
    """
    K, N, M = cs.K, cs.N, cs.M
    dh = np.stack([uniform_ball(rng, cs.xi_h[k], (N,)) for k in range(K)])
    dg = np.stack([uniform_ball(rng, cs.xi_g[k], (M,)) for k in range(K)]) if M else np.zeros((K, 0), complex)
    dH = uniform_ball(rng, cs.xi_H, (M, N))
    if cascade_mode == "consistent":
        dG = cascade(cs.g_est + dg, cs.H_est + dH) - cs.G_est
    elif cascade_mode == "independent":
        dG = np.stack([uniform_ball(rng, cs.xi_G[k], (M, N)) for k in range(K)])
    else:
        raise ValueError(f"unknown cascade mode {cascade_mode!r}")
    return Perturbation(dh, dg, dH, dG)


# ---------------------------------------------------------------- dump file

_FIELDS = ("h", "g", "H", "h_est", "g_est", "H_est")


def dump_channels(cs: ChannelSet, path):
    """CSV with columns name,row,col,real,imag plus radius rows (imag = 0)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "row", "col", "real", "imag"])
        for name in _FIELDS:
            arr = np.atleast_2d(getattr(cs, name))
            for (i, j), z in np.ndenumerate(arr):
                w.writerow([name, i, j, repr(float(z.real)), repr(float(z.imag))])
        for name in ("xi_h", "xi_g", "xi_G"):
            for i, x in enumerate(getattr(cs, name)):
                w.writerow([name, i, 0, repr(float(x)), "0.0"])
        w.writerow(["xi_H", 0, 0, repr(float(cs.xi_H)), "0.0"])


def load_channels(path) -> ChannelSet:
    rows: dict[str, list] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["name"], []).append((int(r["row"]), int(r["col"]),
                                                   complex(float(r["real"]), float(r["imag"]))))

    def mat(name, shape=None):
        entries = rows.get(name, [])
        if shape is None:
            shape = (max(e[0] for e in entries) + 1, max(e[1] for e in entries) + 1)
        out = np.zeros(shape, complex)
        for i, j, z in entries:
            out[i, j] = z
        return out

    h, h_est = mat("h"), mat("h_est")
    K, N = h.shape
    g_e = rows.get("g", [])
    M = (max(e[1] for e in g_e) + 1) if g_e else 0
    g, g_est = mat("g", (K, M)), mat("g_est", (K, M))
    H, H_est = mat("H", (M, N)), mat("H_est", (M, N))
    vec = lambda n: mat(n, (K, 1)).real.ravel()
    return ChannelSet(h, g, H, h_est, g_est, H_est, vec("xi_h"), vec("xi_g"),
                      float(mat("xi_H", (1, 1)).real[0, 0]), vec("xi_G"))
