"""Achievable rates and the first-order rate surrogate."""
from __future__ import annotations

import math

import numpy as np

LOG2E = 1.0 / math.log(2.0)


def effective_channels(channels, coeffs, estimated=False):
    """Rows hbar_k = h_k^H + g_k^H Theta H, shape (K, N)."""
    h = channels.h_est if estimated else channels.h
    g = channels.g_est if estimated else channels.g
    H = channels.H_est if estimated else channels.H
    coeffs = np.asarray(coeffs, complex)
    out = np.conj(h).astype(complex)
    if coeffs.size:
        out = out + (np.conj(g) * coeffs[None, :]) @ H
    return out


def sinr_terms(channels, coeffs, f, sigma0_sq, sigma1_sq, estimated=False):
    """(signal, interference, surface noise) per user, in watts."""
    hb = effective_channels(channels, coeffs, estimated)
    f = np.atleast_2d(np.asarray(f, complex))
    G = np.abs(hb @ f.T) ** 2                   # G[k, i] = |hbar_k f_i|^2
    signal = np.diag(G).copy()
    interference = G.sum(axis=1) - signal
    g = channels.g_est if estimated else channels.g
    coeffs = np.asarray(coeffs, complex)
    ris_noise = sigma1_sq * np.sum(np.abs(np.conj(g) * coeffs[None, :]) ** 2, axis=1) if coeffs.size \
        else np.zeros(channels.K)
    return signal, interference, ris_noise


def user_rates(channels, coeffs, f, sigma0_sq, sigma1_sq, estimated=False):
    s, i, n = sinr_terms(channels, coeffs, f, sigma0_sq, sigma1_sq, estimated)
    return np.log2(1.0 + s / (i + n + sigma0_sq))


def achievable_rate(channels, state, beams, k, sigma0_sq, sigma1_sq):
    """Rate of user k in bits/s/Hz."""
    return float(user_rates(channels, state.coefficients, beams.f, sigma0_sq, sigma1_sq)[k])


def sum_rate(channels, coeffs, f, sigma0_sq, sigma1_sq, estimated=False):
    return float(np.sum(user_rates(channels, coeffs, f, sigma0_sq, sigma1_sq, estimated)))


def rate_lower_bound(A, B, A0, B0):
    """First-order under-estimator of log2(1 + 1/(A B)) around (A0, B0)."""
    A, B, A0, B0 = (np.asarray(x, float) for x in (A, B, A0, B0))
    if np.any(A <= 0) or np.any(B <= 0) or np.any(A0 <= 0) or np.any(B0 <= 0):
        raise ValueError("rate bound needs positive arguments")
    val = (np.log2(1 + 1 / (A0 * B0))
           - LOG2E * (A - A0) / (A0 + A0 ** 2 * B0)
           - LOG2E * (B - B0) / (B0 + B0 ** 2 * A0))
    return float(val) if val.ndim == 0 else val


def rate_lower_bound_grad(A0, B0):
    """Partial derivatives of the surrogate (equal to those of the true function)."""
    return -LOG2E / (A0 + A0 ** 2 * B0), -LOG2E / (B0 + B0 ** 2 * A0)


def surrogate_slope(x0):
    """Coefficient multiplying (A/A0 - 1) and (B/B0 - 1) when the SINR at the
    expansion point is x0 = 1/(A0 B0)."""
    x0 = np.asarray(x0, float)
    return LOG2E * x0 / (1.0 + x0)
