import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfris.channel import generate_channel_set
from mfris.energy import SurfaceState, beams_to_matrices, output_power
from mfris.optimizer.ao import alternating_optimize, initialize, mrt_beams, rzf_beams, start_beams
from mfris.optimizer.lifting import (coefficients_from_lift, complete_free_phase, extract_rank_one, lift_vector,
                                     noise_matrix, output_matrix, stacked_channel)
from mfris.optimizer.model import BeamformerState, Instance, Settings, SrocrState
from mfris.optimizer.rates import (effective_channels, rate_lower_bound, rate_lower_bound_grad,
                                   sinr_terms, sum_rate, user_rates)
from mfris.scenario import UncertaintyParams, default_config


@pytest.fixture(scope="module")
def small():
    cfg = default_config(N=2, K=2, M=4, uncertainty=UncertaintyParams.perfect())
    cs = generate_channel_set(cfg, np.random.default_rng(0))
    return cfg, cs


def _rand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_lifted_identities():
    rng = np.random.default_rng(0)
    M, N = 5, 3
    h, g, H = _rand(rng, N), _rand(rng, M), _rand(rng, M, N)
    c = _rand(rng, M)
    f = _rand(rng, N)
    F = np.outer(f, f.conj())
    u = lift_vector(c)
    U = np.outer(u, u.conj())
    Ht = stacked_channel(h, g, H)
    hbar = np.conj(h) + (np.conj(g) * c) @ H
    assert math.isclose(abs(hbar @ f) ** 2, np.trace(Ht @ F @ Ht.conj().T @ U).real, rel_tol=1e-12)
    s1 = 0.3
    assert math.isclose(s1 * np.sum(np.abs(np.conj(g) * c) ** 2), np.trace(noise_matrix(g, s1) @ U).real,
                        rel_tol=1e-12)
    assert math.isclose(output_power(c, H, [F], s1), np.trace(output_matrix(H, F, s1) @ U).real, rel_tol=1e-12)
    assert np.allclose(coefficients_from_lift(2j * u), c)


def test_extract_rank_one():
    rng = np.random.default_rng(1)
    x = _rand(rng, 4)
    y = extract_rank_one(np.outer(x, x.conj()), lifted=True)
    assert abs(np.vdot(y, x)) == pytest.approx(np.linalg.norm(x) ** 2)
    assert abs(y[-1].imag) < 1e-12 and y[-1].real > 0
    with pytest.raises(ValueError):
        extract_rank_one(np.eye(3))
    with pytest.raises(ValueError):
        coefficients_from_lift(np.array([1.0, 0.0]))


def test_free_phase_completion():
    rng = np.random.default_rng(4)
    a = _rand(rng, 3)
    U = np.zeros((4, 4), complex)
    U[:3, :3] = np.outer(a, a.conj())
    U[3, 3] = 1.0
    V = complete_free_phase(U)
    assert np.allclose(V[:3, :3], U[:3, :3]) and V[3, 3] == pytest.approx(1.0)
    assert np.linalg.matrix_rank(V, tol=1e-9) == 1
    u = lift_vector(a)
    W = np.outer(u, u.conj())
    assert np.array_equal(complete_free_phase(W), W)


def test_rates_without_surface(small):
    cfg, cs = small
    rng = np.random.default_rng(2)
    f = _rand(rng, 2, 2)
    zero = np.zeros(cs.M)
    assert np.allclose(effective_channels(cs, zero), np.conj(cs.h))
    s, i, n = sinr_terms(cs, zero, f, 1.0, 1.0)
    G = np.abs(np.conj(cs.h) @ f.T) ** 2
    assert np.allclose(s, np.diag(G)) and np.allclose(i, G.sum(1) - np.diag(G)) and np.all(n == 0)
    r = user_rates(cs, zero, f, 1e-10, 1e-10)
    assert math.isclose(sum_rate(cs, zero, f, 1e-10, 1e-10), r.sum(), rel_tol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_rate_bound_underestimates(A, B, A0, B0):
    exact = math.log2(1 + 1 / (A * B))
    assert rate_lower_bound(A, B, A0, B0) <= exact + 1e-12 * max(1.0, abs(exact))
    assert math.isclose(rate_lower_bound(A0, B0, A0, B0), math.log2(1 + 1 / (A0 * B0)), rel_tol=1e-15)


def test_rate_bound_gradient():
    A0, B0 = 0.7, 2.3
    gA, gB = rate_lower_bound_grad(A0, B0)
    f = lambda a, b: math.log2(1 + 1 / (a * b))
    h = 1e-6
    assert math.isclose(gA, (f(A0 + h, B0) - f(A0 - h, B0)) / (2 * h), rel_tol=1e-6)
    assert math.isclose(gB, (f(A0, B0 + h) - f(A0, B0 - h)) / (2 * h), rel_tol=1e-6)
    with pytest.raises(ValueError):
        rate_lower_bound(-1.0, 1.0, 1.0, 1.0)


def test_start_beams_use_full_power(small):
    cfg, cs = small
    inst = Instance.from_config(cfg, cs)
    state = SurfaceState(np.ones(4), np.ones(4), np.zeros(4))
    for b in (mrt_beams(inst, state), rzf_beams(inst, state), start_beams(inst, state)):
        assert b.power == pytest.approx(cfg.P_BS_max, rel=1e-12)


def test_srocr_weights():
    st_ = SrocrState(w=np.zeros(2), delta=0.1)
    st_.accept(np.array([0.5, 0.995]))
    assert np.allclose(st_.w, [0.6, 0.999])
    st_.reject(np.array([0.5, 0.995]))
    assert st_.delta == 0.05 and not st_.stalled


@pytest.mark.parametrize("scheme", ["mf-ris", "self-sustainable", "reflecting-only", "no-ris"])
def test_ao_small_instance(small, scheme):
    cfg, cs = small
    inst = Instance.from_config(cfg, cs, scheme)
    res = alternating_optimize(inst, rng=np.random.default_rng(1), max_outer=4)
    assert res.feasible
    rates = [e["sum_rate"] for e in res.trace]
    assert all(b >= a - 1e-6 for a, b in zip(rates, rates[1:]))
    assert res.beams.power <= cfg.P_BS_max * (1 + 1e-6)
    assert res.sum_rate == pytest.approx(sum_rate(cs, res.state.coefficients, res.beams.f,
                                                  cfg.sigma0_sq, cfg.sigma1_sq), rel=1e-12)
    assert set(np.unique(res.state.alpha)) <= {0.0, 1.0}
    if scheme == "no-ris":
        assert np.all(res.state.coefficients == 0)
    if scheme == "reflecting-only":
        assert np.all(res.state.alpha == 1) and np.all(res.state.beta <= 1 + 1e-6)
    if scheme in ("mf-ris", "self-sustainable"):
        assert inst.report(res.state, res.beams).feasible


def test_warm_start_never_loses_rate(small):
    cfg, cs = small
    inst = Instance.from_config(cfg, cs)
    state, beams = initialize(inst, np.random.default_rng(3))
    start = sum_rate(cs, state.coefficients, beams.f, cfg.sigma0_sq, cfg.sigma1_sq)
    res = alternating_optimize(inst, state=state, beams=beams, max_outer=2)
    assert res.sum_rate >= start - 1e-9


def test_settings_defaults():
    s = Settings()
    assert s.rank_target == 0.999 and s.binary_tol == 1e-3 and s.slack_tol == 1e-6
    assert BeamformerState.zeros(2, 3).power == 0.0
    assert len(beams_to_matrices(np.ones((2, 3)))) == 2
