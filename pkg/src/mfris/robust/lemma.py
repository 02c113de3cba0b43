"""Linearized signal power as a quadratic form in the channel errors.

For user k the combined channel is z(x) = (h~ + dh)^H + v^H (G~ + dG) with
the errors stacked as x = [dh; vec(conj(dG))] (column-major vec, length
N + MN). Both the current and the expansion-point received amplitudes are
affine in x through x^H:

    s(x) = s0 + x^H b,        b   = [f;   f   kron conj(v)]
    r(x) = r0 + x^H b_l,      b_l = [f_l; f_l kron conj(v_l)]

so the tangent bound |s|^2 >= 2 Re{conj(r) s} - |r|^2 is the quadratic form

    A = b_l b^H + b b_l^H - b_l b_l^H
    a = conj(r0) b + conj(s0) b_l - conj(r0) b_l
    c = 2 Re{conj(r0) s0} - |r0|^2.

v is the conjugate of the surface coefficient vector, so that
v^H G~_k = c^T diag(g_k^H) H is the cascaded row used elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .lmi import QuadraticForm, conj, is_expr, outer


def stacked(f, v):
    """[f; f kron conj(v)]; either argument may be an expression."""
    w = conj(v)
    if is_expr(f) or is_expr(w):
        N = f.shape[0]
        parts = [f] + [f[n] * w for n in range(N)]
        return cp.hstack(parts)
    f = np.asarray(f, complex)
    return np.concatenate([f, np.kron(f, w)])


def amplitude(h, G, f, v):
    """(h^H + v^H G) f for the estimated channels."""
    row = np.conj(h) + (conj(v) @ G if is_expr(v) else np.conj(v) @ G)
    return row @ f


def tangent_form(s0, b, r0, b_l):
    """Quadratic form of 2 Re{conj(r) s} - |r|^2 with s = s0 + x^H b, r = r0 + x^H b_l;
    r0 and b_l must be constants."""
    r0 = complex(r0)
    A = outer(b_l, b) + outer(b, b_l) - np.outer(b_l, np.conj(b_l))
    a = np.conj(r0) * b + conj(s0) * b_l - np.conj(r0) * b_l
    if is_expr(s0):
        c = 2 * cp.real(np.conj(r0) * s0) - abs(r0) ** 2
    else:
        c = float(2 * np.real(np.conj(r0) * s0) - abs(r0) ** 2)
    return QuadraticForm(A, a, c)


@dataclass
class SignalFormCoefficients:
    A: object
    a: object
    a0: object
    f_l: np.ndarray
    v_l: np.ndarray

    @property
    def form(self):
        return QuadraticForm(self.A, self.a, self.a0)

    @property
    def dim(self):
        return self.A.shape[0]


def signal_form_coefficients(h, G, f, v, f_l, v_l) -> SignalFormCoefficients:
    """Coefficients of the linearized signal power of one user.

    h: (N,) direct channel estimate, G: (M, N) cascaded estimate
    diag(g^H) H; f, v: current beam and (conjugated) surface vector, either
    may be a cvxpy expression; f_l, v_l: expansion point.
    """
    h = np.asarray(h, complex)
    G = np.asarray(G, complex).reshape(-1, h.shape[0]) if np.size(G) else np.zeros((0, h.shape[0]), complex)
    f_l = np.asarray(f_l, complex)
    v_l = np.asarray(v_l, complex)
    N, M = h.shape[0], G.shape[0]
    if f.shape != (N,) or f_l.shape != (N,) or v.shape != (M,) or v_l.shape != (M,):
        raise ValueError(f"dimension mismatch: N={N}, M={M}, f {f.shape}, v {v.shape}, "
                         f"f_l {f_l.shape}, v_l {v_l.shape}")
    b = stacked(f, v)
    b_l = stacked(f_l, v_l)
    s0 = amplitude(h, G, f, v)
    r0 = amplitude(h, G, f_l, v_l)
    q = tangent_form(s0, b, r0, b_l)
    return SignalFormCoefficients(q.A, q.a, q.c, f_l, v_l)


def error_vector(dh, dG):
    """x = [dh; vec(conj(dG))] with column-major vec."""
    return np.concatenate([np.asarray(dh, complex), np.conj(np.asarray(dG, complex)).ravel(order="F")])
