"""Robust constraint blocks shared by the two subproblems and the certificate.

Units: with beams normalized to unit total power (f = sqrt(P) phi), the
communication channels are scaled by sqrt(P / sigma0^2) so received powers
are in noise units, and the BS-surface channel by sqrt(1e3 P) so surface
powers are in milliwatts. The error radii are scaled with their channels.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import cvxpy as cp
import numpy as np

from ..conic import ConicProgram, solve
from ..energy import MARGIN_TOL, harvested_power
from ..optimizer.common import MW
from ..optimizer.model import Instance
from .lemma import signal_form_coefficients, tangent_form
from .lmi import (QuadraticForm, conj, is_expr, s_procedure_lmi, sign_definiteness_lmi)


@dataclass(frozen=True)
class RobustData:
    inst: Instance
    h: np.ndarray            # (K, N) direct estimates
    G: np.ndarray            # (K, M, N) cascaded estimates diag(g^H) H
    g: np.ndarray            # (K, M) surface-to-user estimates, scaled by sigma1 / sigma0
    H: np.ndarray            # (M, N) BS-surface estimate, sqrt(mW) per unit beam power
    xi_h: np.ndarray
    xi_G: np.ndarray
    xi_g: np.ndarray
    xi_H: float
    sigma1_mw: float

    @classmethod
    def from_instance(cls, inst: Instance):
        cs = inst.channels
        s = np.sqrt(inst.P_max / inst.sigma0_sq)
        n = np.sqrt(inst.sigma1_sq / inst.sigma0_sq)
        e = np.sqrt(MW * inst.P_max)
        return cls(inst, cs.h_est * s, cs.G_est * s, cs.g_est * n, cs.H_est * e,
                   np.asarray(cs.xi_h, float) * s, np.asarray(cs.xi_G, float) * s,
                   np.asarray(cs.xi_g, float) * n, float(cs.xi_H) * e, MW * inst.sigma1_sq)

    def nominal(self):
        """Same data with every radius set to zero."""
        z = np.zeros(self.K)
        return replace(self, xi_h=z, xi_G=z.copy(), xi_g=z.copy(), xi_H=0.0)

    @property
    def K(self):
        return self.h.shape[0]

    @property
    def N(self):
        return self.h.shape[1]

    @property
    def M(self):
        return self.H.shape[0]


@dataclass
class RobustSlacks:
    """Multipliers of the last solve (S-procedure u, sign-definiteness w) and
    the surface-noise bounds D_k in noise units."""
    upsilon_h: np.ndarray
    upsilon_G: np.ndarray
    upsilon_H_m: np.ndarray
    upsilon_H: float
    varpi_h: np.ndarray
    varpi_G: np.ndarray
    varpi_g: np.ndarray
    D: np.ndarray

    def check(self, tol=1e-9):
        for name, v in vars(self).items():
            if np.any(np.asarray(v, float) < -tol):
                raise ValueError(f"negative multiplier {name}")
        return self


def _restrict(form: QuadraticForm, idx):
    idx = np.asarray(idx, int)
    A = form.A[idx, :][:, idx] if is_expr(form.A) else np.asarray(form.A)[np.ix_(idx, idx)]
    a = form.a[idx] if is_expr(form.a) else np.asarray(form.a)[idx]
    return QuadraticForm(A, a, form.c)


def robust_nonneg(prog, tag, form: QuadraticForm, balls, name):
    """form(x) >= 0 for every x with ||x[mask_j]|| <= r_j (disjoint masks).
    Coordinates whose ball has zero radius are fixed at zero, which is exact."""
    dim = form.dim
    keep = np.zeros(dim, bool)
    for mask, r in balls:
        if r > 0:
            keep |= np.asarray(mask, bool)
    if not keep.any():
        prog.add(tag, form.c >= 0)
        return None
    idx = np.flatnonzero(keep)
    # written in errors normalized by their radii, so every ball is the unit
    # ball and the multipliers stay on the scale of the form itself
    radius = np.zeros(dim)
    for mask, r in balls:
        if r > 0:
            radius[np.asarray(mask, bool)] = r
    sub = _restrict(form, idx).rescaled(radius[idx])
    cons = [QuadraticForm.ball(idx.size, 1.0, np.asarray(mask, bool)[idx]) for mask, r in balls if r > 0]
    return s_procedure_lmi(prog, tag, sub, cons, name)


# ---------------------------------------------------------------- signal

def signal_block(prog, data: RobustData, k, phi_k, c, phi_l, c_l, t, name):
    """t <= linearized signal power of user k for all errors in the balls."""
    N, M = data.N, data.M
    L = signal_form_coefficients(data.h[k], data.G[k], phi_k, conj(c), phi_l, np.conj(c_l))
    mask_h = np.arange(N + M * N) < N
    return robust_nonneg(prog, "robust-signal", L.form.shifted(-t),
                         [(mask_h, data.xi_h[k]), (~mask_h, data.xi_G[k])], name)


# ---------------------------------------------------------------- interference

def interference_matrices(data: RobustData, k, phi, c, I_var, D_var, surface_side=False):
    """D and the (E_j, F_j, xi_j) pairs of the interference Schur block of user k.

    With beams variable (phi an expression) the error terms read
    E_1 = E_2 = -[0, F_-k], F_1 = e_1^T, F_2 = [v, 0], so G_1 = dh and
    G_2 = dG^H carry exactly their own errors. When the surface vector
    is the variable, the second pair is used with the roles of E and F
    swapped (dG^H -> dG), which keeps the block affine without linearizing.
    Returns (D, pairs) or (None, []) for a single user.
    """
    K, N, M = data.K, data.N, data.M
    others = [i for i in range(K) if i != k]
    if not others:
        return None, []
    if is_expr(phi):
        Fm = cp.vstack([phi[i] for i in others]).T
    else:
        Fm = np.asarray(phi)[others].T
    z = np.conj(data.h[k]) + (c @ data.G[k] if M else 0)
    zF = z @ Fm
    zF = cp.reshape(zF, (1, K - 1), order="F") if is_expr(zF) else np.asarray(zF).reshape(1, -1)
    top = cp.reshape(I_var - D_var - 1.0, (1, 1), order="F")
    D = cp.bmat([[top, zF], [conj(zF).T, np.eye(K - 1)]])
    E = _hstack_zero_col(-Fm, N)
    pairs = [(E, _selector(K), data.xi_h[k])]
    if M:
        v = conj(c)
        Fv = _hstack_zero_cols(column_of(v), M, K - 1)
        if surface_side:
            pairs.append((Fv, E, data.xi_G[k]))
        else:
            pairs.append((E, Fv, data.xi_G[k]))
    return D, pairs


def column_of(v):
    return cp.reshape(v, (v.shape[0], 1), order="F") if is_expr(v) else np.asarray(v).reshape(-1, 1)


def _hstack_zero_col(X, rows):
    """[0_{rows x 1}, X]."""
    z = np.zeros((rows, 1))
    return cp.hstack([z, X]) if is_expr(X) else np.hstack([z, X])


def _hstack_zero_cols(col, rows, n):
    """[col, 0_{rows x n}]."""
    z = np.zeros((rows, n))
    return cp.hstack([col, z]) if is_expr(col) else np.hstack([col, z])


def _selector(n):
    """e_1^T of length n."""
    e = np.zeros((1, n))
    e[0, 0] = 1.0
    return e


def noise_matrices(data: RobustData, k, c, D_var):
    """D and the single pair of the surface-noise Schur block of user k:
    E = -[0, Theta], F = e_1^T, G = conj(dg)."""
    M = data.M
    row = cp.multiply(np.conj(data.g[k]), c) if is_expr(c) else np.conj(data.g[k]) * c
    row = cp.reshape(row, (1, M), order="F") if is_expr(row) else np.asarray(row).reshape(1, -1)
    D = cp.bmat([[cp.reshape(D_var, (1, 1), order="F"), row], [conj(row).T, np.eye(M)]])
    Theta = cp.diag(c) if is_expr(c) else np.diag(c)
    E = _hstack_zero_col(-Theta, M)
    return D, [(E, _selector(M + 1), data.xi_g[k])]


def schur_blocks(data: RobustData, phi, c, I_vars, D_vars, surface_side=False):
    """[(tag, k, D, pairs)] for the interference and surface-noise blocks of every user."""
    out = []
    for k in range(data.K):
        D, pairs = interference_matrices(data, k, phi, c, I_vars[k], D_vars[k], surface_side)
        if D is not None:
            out.append(("robust-interference", k, D, pairs))
        if data.M:
            D, pairs = noise_matrices(data, k, c, D_vars[k])
            out.append(("robust-noise", k, D, pairs))
    return out


def add_schur_blocks(prog, data: RobustData, phi, c, I_vars, D_vars, surface_side=False):
    """Adds the blocks; returns the multipliers {(tag, k): w}."""
    mult = {}
    for k in range(data.K):
        if data.K == 1:
            prog.add("robust-interference", I_vars[k] >= D_vars[k] + 1.0)
        if data.M == 0:
            prog.add("robust-noise", D_vars[k] >= 0)
    for tag, k, D, pairs in schur_blocks(data, phi, c, I_vars, D_vars, surface_side):
        live = [p for p in pairs if p[2] > 0]
        if live:
            mult[(tag, k)] = sign_definiteness_lmi(prog, tag, D, live, f"w-{tag}-{k}")
        else:
            prog.psd(tag, D)
    return mult


# ---------------------------------------------------------------- energy

def harvest_block(prog, data: RobustData, m, phi, phi_l, rf, name):
    """rf <= incident power at element m (mW, including the surface noise)
    for every row error with norm <= xi_H; the beam dependence is replaced
    by its tangent at phi_l."""
    K, N = data.K, data.N
    Hm = data.H[m]
    form = None
    for k in range(K):
        pk = phi[k]
        q = tangent_form(Hm @ pk, pk, complex(Hm @ phi_l[k]), phi_l[k])
        form = q if form is None else QuadraticForm(form.A + q.A, form.a + q.a, form.c + q.c)
    form = form.shifted(data.sigma1_mw - rf)
    return robust_nonneg(prog, "robust-harvest", form, [(np.ones(N, bool), data.xi_H)], name)


def output_block_beams(prog, data: RobustData, c, phi, W, name):
    """W >= output power (mW) for every BS-surface error with Frobenius norm
    <= xi_H, the surface fixed. Written with the Gram factor of the
    quadratic part so that it stays affine in the beams."""
    idx = np.flatnonzero(np.abs(c) > 0)
    if idx.size == 0:
        prog.add("robust-output", W >= 0)
        return None
    K, N = data.K, data.N
    w = np.abs(c[idx]) ** 2
    base = data.sigma1_mw * float(np.sum(w))
    n = idx.size * N
    cols, amps = [], []
    for k in range(K):
        for j, m in enumerate(idx):
            amp = np.sqrt(w[j]) * (data.H[m] @ phi[k])
            amp = cp.reshape(amp, (1,), order="F") if is_expr(amp) else np.atleast_1d(amp)
            amps.append(amp)
            parts = [np.zeros(j * N), np.sqrt(w[j]) * phi[k], np.zeros(n - (j + 1) * N), amp]
            cols.append(cp.hstack(parts) if any(is_expr(p) for p in parts) else np.concatenate(parts))
    if data.xi_H <= 0:
        tail = cp.hstack(amps) if is_expr(phi) else np.concatenate(amps)
        prog.add("robust-output", W >= base + cp.sum_squares(tail))
        return None
    L = cp.vstack(cols).T if is_expr(phi) else np.stack(cols, axis=1)
    # normalized errors: the error rows of the factor scale with the radius
    L = np.diag(np.concatenate([np.full(n, data.xi_H), [1.0]])) @ L
    f0 = QuadraticForm(np.zeros((n, n)), np.zeros(n), W - base)
    return s_procedure_lmi(prog, "robust-output", f0, [QuadraticForm.ball(n, 1.0)], name, gram=L)


def output_block_surface(prog, data: RobustData, phi, e, idx, W, name):
    """W >= sum_j e_j (worst incident power of element idx[j]) jointly over the
    BS-surface error ball; affine in the gains e for fixed beams."""
    idx = np.asarray(idx, int)
    if idx.size == 0:
        prog.add("robust-output", W >= 0)
        return None
    N = data.N
    phi = np.asarray(phi)
    Fb = phi.T @ phi.conj()                   # sum_k phi_k phi_k^H
    u = [Fb @ data.H[m].conj() for m in idx]
    p = np.array([float(np.real(data.H[m] @ Fb @ data.H[m].conj())) for m in idx])
    const = W - e @ (p + data.sigma1_mw)
    if data.xi_H <= 0:
        prog.add("robust-output", const >= 0)
        return None
    n = idx.size
    Z = np.zeros((N, N))
    A = cp.bmat([[-e[i] * Fb if i == j else Z for j in range(n)] for i in range(n)])
    a = cp.hstack([-e[i] * u[i] for i in range(n)])
    form = QuadraticForm(A, a, const).rescaled(np.full(n * N, data.xi_H))
    return s_procedure_lmi(prog, "robust-output", form, [QuadraticForm.ball(n * N, 1.0)], name)


# ---------------------------------------------------------------- certificate

@dataclass
class Certificate:
    """Worst-case values over the error balls for a fixed (beams, surface)."""
    S: np.ndarray            # signal lower bounds, noise units
    I: np.ndarray            # interference-plus-noise upper bounds, noise units
    rf_mw: np.ndarray        # incident power lower bounds per element (mW, alpha = 0)
    W_mw: float              # output power upper bound (mW)
    margin: float            # harvested minus consumed at the bounds (W)
    ok: bool = True

    @property
    def sinr(self):
        return self.S / self.I

    @property
    def sum_rate(self):
        if not self.ok:
            return -np.inf
        return float(np.sum(np.log2(1.0 + np.maximum(self.S, 0.0) / self.I)))

    @property
    def feasible(self):
        return self.ok and self.margin >= -MARGIN_TOL


def energy_margin(data: RobustData, alpha, rf_mw, W_mw):
    model = data.inst.model
    if not model.energy_constrained or data.M == 0:
        return np.inf
    alpha = np.asarray(alpha, float)
    pa = np.where(alpha > 0.5, 0.0, harvested_power(rf_mw / MW, data.inst.energy))
    return float(np.sum(pa) - model.consumed(alpha, W_mw / MW))


def _failed(K, M):
    return Certificate(np.zeros(K), np.full(K, np.inf), np.zeros(M), np.inf, -np.inf, ok=False)


def certify(data: RobustData, alpha, c, phi) -> Certificate:
    """Worst-case signal, interference, incident and output powers, each the
    value of the same S-procedure / sign-definiteness certificate the
    subproblems use (at the expansion point the tangents are exact).

    Signal, interference and energy parts are solved separately: their values differ by
    many orders of magnitude and a joint objective would hide the small ones
    inside the solver's gap tolerance.
    """
    K, M = data.K, data.M
    c = np.asarray(c, complex)
    phi = np.asarray(phi, complex)
    prog = ConicProgram()
    t = prog.var("t", K)
    for k in range(K):
        signal_block(prog, data, k, phi[k], c, phi[k], c, t[k], f"u-sig-{k}")
    prog.maximize(cp.sum(t))
    sol = solve(prog)
    if not sol.ok:
        return _failed(K, M)
    S = np.asarray(sol["t"], float)
    prog = ConicProgram()
    I = prog.var("I", K)
    D = prog.var("D", K, nonneg=True)
    add_schur_blocks(prog, data, phi, c, [I[k] for k in range(K)], [D[k] for k in range(K)])
    prog.maximize(-cp.sum(I) - cp.sum(D))
    sol = solve(prog)
    if not sol.ok:
        return _failed(K, M)
    Iv = np.asarray(sol["I"], float)
    rf_val = np.zeros(M)
    W_val = 0.0
    if data.inst.model.energy_constrained and M > 0:
        for m in range(M):
            prog = ConicProgram()
            rf = prog.var("rf")
            harvest_block(prog, data, m, phi, phi, rf, "u-rf")
            prog.maximize(rf)
            sol = solve(prog)
            if not sol.ok:
                return _failed(K, M)
            rf_val[m] = float(sol["rf"])
        prog = ConicProgram()
        W = prog.var("W")
        output_block_beams(prog, data, c, phi, W, "u-out")
        prog.maximize(-W)
        sol = solve(prog)
        if not sol.ok:
            return _failed(K, M)
        W_val = float(sol["W"])
    margin = energy_margin(data, alpha, rf_val, W_val)
    return Certificate(S, Iv, rf_val, W_val, margin, ok=True)
