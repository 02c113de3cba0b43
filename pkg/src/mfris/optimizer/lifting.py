"""Trace-lifted forms of the rate and power expressions.

With u = [conj(c); 1] (c the diagonal of Theta) and U = u u^H:
    |hbar_k f|^2                 = Tr(Ht_k F Ht_k^H U)
    sigma1^2 ||g_k^H Theta||^2   = Tr(Gbar_k U)
    P_O                          = Tr(Hbar U)
where Ht_k = [diag(g_k^H) H; h_k^H].
"""
from __future__ import annotations

import numpy as np

from ..conic import leading_eigenpair


def stacked_channel(h_k, g_k, H):
    """Ht_k = [diag(g_k^H) H; h_k^H], shape (M+1, N)."""
    return np.vstack([np.conj(g_k)[:, None] * H, np.conj(h_k)[None, :]])


def noise_matrix(g_k, sigma1_sq):
    M = g_k.size
    out = np.zeros((M + 1, M + 1), complex)
    out[:M, :M] = np.diag(sigma1_sq * np.abs(g_k) ** 2)
    return out


def output_matrix(H, F_sum, sigma1_sq):
    """Each element amplifies only its own incident signal, so the output
    power only involves the diagonal of U."""
    M = H.shape[0]
    incident = np.einsum("mi,ij,mj->m", H, F_sum, H.conj()).real
    out = np.zeros((M + 1, M + 1), complex)
    out[:M, :M] = np.diag(incident + sigma1_sq)
    return out


def lift_vector(coeffs):
    return np.concatenate([np.conj(np.asarray(coeffs, complex)), [1.0]])


def coefficients_from_lift(u):
    """Undo lift_vector after normalizing the last entry to 1."""
    u = np.asarray(u, complex)
    if abs(u[-1]) < 1e-12:
        raise ValueError("last entry of the lifted vector vanishes")
    u = u / u[-1]
    return np.conj(u[:-1])


def complete_free_phase(U, tol=1e-6):
    """Without a direct link nothing couples the surface block of U to its
    last entry, and an interior-point solver returns the block-diagonal
    optimum.  Replace it by the rank-one lift of the block's leading factor,
    which has the same surface block when that block is rank one."""
    U = np.asarray(U, complex)
    n = U.shape[0] - 1
    if n < 1:
        return U
    A = (U[:n, :n] + U[:n, :n].conj().T) / 2
    scale = np.sqrt(max(float(np.trace(A).real), 0.0) * max(float(U[n, n].real), 0.0))
    if scale <= 0 or np.linalg.norm(U[:n, n]) > tol * scale:
        return U
    lam, v = leading_eigenpair(A, tol=1e-9)
    x = np.concatenate([np.sqrt(max(lam, 0.0)) * v, [np.sqrt(max(float(U[n, n].real), 0.0))]])
    return np.outer(x, x.conj())


def extract_rank_one(X, threshold=0.999, lifted=False):
    """Leading rank-one factor sqrt(lambda) * v of a near-rank-one PSD matrix.

    With lifted=True the global phase is fixed so the last entry is real positive.
    """
    X = np.asarray(X, complex)
    tr = float(np.trace(X).real)
    if tr <= 0:
        return np.zeros(X.shape[0], complex)
    lam, v = leading_eigenpair((X + X.conj().T) / 2, tol=1e-6)
    ratio = lam / tr
    if ratio < threshold:
        raise ValueError(f"trace ratio {ratio:.6f} below {threshold}; matrix is not near rank one")
    x = np.sqrt(max(lam, 0.0)) * v
    if lifted:
        ph = np.angle(x[-1]) if abs(x[-1]) > 0 else 0.0
        x = x * np.exp(-1j * ph)
    return x
