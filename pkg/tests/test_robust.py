import math

import cvxpy as cp
import numpy as np
import pytest

from mfris.channel import generate_channel_set
from mfris.conic import ConicProgram, solve
from mfris.energy import SurfaceState
from mfris.optimizer.ao import mrt_beams
from mfris.optimizer.model import Instance
from mfris.robust.blocks import RobustData, certify
from mfris.robust.lemma import error_vector, signal_form_coefficients
from mfris.robust.lmi import QuadraticForm, s_procedure_lmi, sign_definiteness_dim, sign_definiteness_lmi
from mfris.robust.validate import validate_by_sampling, write_violations_csv
from mfris.scenario import UncertaintyParams, default_config

from robust_oracles import lemma_residual, sdp_soundness_worst, sproc_soundness_worst


def test_lemma_identity_small_sample():
    rng = np.random.default_rng(0)
    worst = max(lemma_residual(rng, N=int(rng.integers(1, 4)), M=int(rng.integers(0, 4))) for _ in range(30))
    assert worst <= 1e-9


def test_lemma_dimension_checks():
    with pytest.raises(ValueError):
        signal_form_coefficients(np.ones(2), np.ones((3, 2)), np.ones(2), np.ones(2), np.ones(2), np.ones(3))


def test_error_vector_layout():
    dG = np.arange(6).reshape(3, 2) * (1 + 1j)
    x = error_vector(np.array([1, 2]), dG)
    assert np.array_equal(x[2:], np.conj(dG).ravel(order="F"))


def test_quadratic_form_rescaled():
    rng = np.random.default_rng(1)
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    q = QuadraticForm(B + B.conj().T, rng.standard_normal(3) + 0j, 0.5).check()
    s = np.array([2.0, 0.5, 3.0])
    y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    assert math.isclose(q.rescaled(s)(y), q(s * y), rel_tol=1e-12)
    with pytest.raises(ValueError):
        QuadraticForm(B, np.zeros(3), 0.0).check()


def test_lmi_builders_reject_bad_input():
    prog = ConicProgram()
    t = prog.var("t")
    with pytest.raises(ValueError):
        s_procedure_lmi(prog, "s", QuadraticForm(np.eye(2), np.zeros(2), t), [], "u")
    with pytest.raises(ValueError):
        s_procedure_lmi(prog, "s", QuadraticForm(np.eye(2), np.zeros(2), t),
                        [QuadraticForm(np.eye(2), np.zeros(2), t)], "u2")
    D = prog.var("D", (2, 2), hermitian=True)
    with pytest.raises(ValueError):
        sign_definiteness_lmi(prog, "d", D, [(np.ones((1, 2)), cp.Variable((1, 2)), 1.0)], "w")
    assert sign_definiteness_dim(3, [(np.ones((2, 3)), None, 1.0), (np.ones((1, 3)), None, 1.0)]) == 6


def test_s_procedure_sound_sampled():
    assert sproc_soundness_worst(np.random.default_rng(2), draws=1000) >= -1e-7


def test_sign_definiteness_sound_sampled():
    assert sdp_soundness_worst(np.random.default_rng(3), draws=1000) >= -1e-7


@pytest.fixture(scope="module")
def small_robust():
    k = math.sqrt(0.01)
    cfg = default_config(N=2, K=2, M=3, uncertainty=UncertaintyParams(k, k, k))
    cs = generate_channel_set(cfg, np.random.default_rng(0))
    inst = Instance.from_config(cfg, cs)
    state = SurfaceState(np.zeros(3), np.zeros(3), np.zeros(3))
    beams = mrt_beams(inst, state, estimated=True)
    return inst, state, beams


def test_nominal_certificate_is_exact(small_robust):
    inst, state, beams = small_robust
    data = RobustData.from_instance(inst).nominal()
    cert = certify(data, state.alpha, state.coefficients, beams.f / np.sqrt(inst.P_max))
    assert cert.ok
    cs = inst.channels
    amp = np.conj(cs.h_est) @ beams.f.T
    sig = np.abs(np.diag(amp)) ** 2 / inst.sigma0_sq
    assert np.allclose(cert.S, sig, rtol=1e-5)
    inn = (np.sum(np.abs(amp) ** 2, axis=1) - np.abs(np.diag(amp)) ** 2) / inst.sigma0_sq + 1
    assert np.allclose(cert.I, inn, rtol=1e-5)


def test_certificate_bounds_hold_by_sampling(small_robust, tmp_path):
    inst, state, beams = small_robust
    rep = validate_by_sampling(inst, state, beams, 200, np.random.default_rng(5))
    assert rep.certificate.ok and rep.clean, rep.summary()
    assert np.all(rep.worst_sinr >= rep.certified_sinr * (1 - 1e-6))
    path = write_violations_csv(rep, tmp_path / "v.csv")
    assert path.read_text().splitlines() == ["draw,constraint,violation"]


def test_nominal_certificate_is_violated_under_errors(small_robust):
    inst, state, beams = small_robust
    rep = validate_by_sampling(inst, state, beams, 200, np.random.default_rng(5), nominal=True)
    assert not rep.clean
    assert any(name.startswith("signal") for _, name, _ in rep.rows)
