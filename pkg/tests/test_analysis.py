import math
from dataclasses import replace

import numpy as np
import pytest

from mfris.analysis import (AMPLIFICATION_LIMITED, POWER_LIMITED, AnalysisParams, backsolve_output_power,
                            crossover_threshold, example_params, optimal_amplitude,
                            optimal_elements_mf, optimal_siso_solution, snr_mf, snr_se,
                            sumpa_for_output_power)
from mfris.scenario import EnergyParams


def snr_oracle(p, M_A, beta):
    """Received SNR with M_A coherently combined amplifying elements of gain beta."""
    return p.P_BS_max * beta * p.h_sq * p.g_sq * M_A ** 2 / (beta * p.sigma1_sq * p.g_sq * M_A + p.sigma0_sq)


def budget_oracle(p, M_A):
    """Largest common gain the harvest pays for (amplifier, circuits, output)."""
    e = p.energy
    spare = p.sumPA - M_A * (e.P_b + e.P_DC) - (p.M - M_A) * e.P_C
    if spare < 0:
        return None
    return min(p.beta_max, spare / (e.xi * M_A * (p.P_BS_max * p.h_sq + p.sigma1_sq)))


def mf_oracle(p, M_A):
    if M_A == 0:
        return 0.0 if p.sumPA >= p.M * p.energy.P_C else None
    b = budget_oracle(p, M_A)
    return None if b is None else snr_oracle(p, M_A, b)


def test_example_anchor_values():
    p = example_params()
    assert math.isclose(10 * math.log10(snr_mf(p).gamma), 33.2, abs_tol=1e-9)
    assert abs(10 * math.log10(snr_se(p).gamma) - 22.0) <= 0.05
    assert abs(crossover_threshold(p) - 21) <= 1


def test_branches():
    p = example_params(M_A=1)
    beta, branch, ok = optimal_amplitude(p)
    assert ok and branch == AMPLIFICATION_LIMITED and beta == p.beta_max
    p = example_params(M_A=18)
    beta, branch, ok = optimal_amplitude(p)
    assert ok and branch == POWER_LIMITED and beta < p.beta_max
    beta, branch, ok = optimal_amplitude(example_params(M_A=300))
    assert not ok


def test_power_limited_snr_equals_direct_formula():
    for M_A in (5, 12, 18, 22):
        p = example_params(M_A=M_A)
        assert math.isclose(snr_mf(p).gamma, mf_oracle(p, M_A), rel_tol=1e-12)


def test_backsolve_roundtrip():
    p = example_params(M_A=10)
    po = backsolve_output_power(p, 1000.0)
    q = replace(p, sumPA=sumpa_for_output_power(p, po))
    assert math.isclose(snr_mf(q).gamma, 1000.0, rel_tol=1e-10)
    with pytest.raises(ValueError):
        backsolve_output_power(p, 1e12)


def test_siso_solution_phases_align():
    rng = np.random.default_rng(0)
    p = example_params(M_A=10)
    g = np.exp(1j * rng.uniform(0, 6, p.M))
    h = np.exp(1j * rng.uniform(0, 6, p.M))
    sol = optimal_siso_solution(p, g, h)
    combined = np.sum(np.conj(g) * np.exp(1j * sol.theta_star) * h)
    assert math.isclose(abs(combined), p.M, rel_tol=1e-12)
    with pytest.raises(ValueError):
        optimal_siso_solution(p.at(0))


def test_params_validation():
    with pytest.raises(ValueError):
        example_params(M_A=301)
    with pytest.raises(ValueError):
        replace(example_params(), h_sq=0.0)


def random_params(rng):
    e = EnergyParams(xi=rng.uniform(1.0, 1.5), P_b=rng.uniform(0.5e-3, 3e-3),
                     P_DC=rng.uniform(0.1e-3, 1e-3), P_C=rng.uniform(0.5e-6, 5e-6))
    M = int(rng.integers(20, 400))
    return AnalysisParams(P_BS_max=rng.uniform(0.5, 10), M=M, M_A=int(rng.integers(1, M // 4 + 2)),
                          h_sq=10 ** rng.uniform(-5.5, -4), g_sq=10 ** rng.uniform(-7, -5),
                          sigma0_sq=1e-10, sigma1_sq=1e-10, beta_max=10 ** rng.uniform(0.6, 2.0),
                          energy=e, sumPA=rng.uniform(5e-3, 0.1))


def test_optimal_elements_matches_exhaustive_on_draws():
    rng = np.random.default_rng(42)
    for _ in range(20):
        p = random_params(rng)
        vals = [mf_oracle(p, m) for m in range(p.M + 1)]
        best = max(range(p.M + 1), key=lambda m: -np.inf if vals[m] is None else vals[m])
        assert optimal_elements_mf(p) == best


def test_se_best_split_is_largest_feasible():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = random_params(rng)
        e = p.energy
        feasible = [m for m in range(p.M + 1) if m * e.P_b + (p.M - m) * e.P_C <= p.sumPA]
        assert snr_se(p).M_A_opt == max(feasible)
