"""Independent checks of the robust building blocks, shared by the unit and
acceptance tests."""
import cvxpy as cp
import numpy as np

from mfris.channel import uniform_ball
from mfris.conic import ConicProgram, solve
from mfris.robust.lemma import error_vector, signal_form_coefficients
from mfris.robust.lmi import QuadraticForm, s_procedure_lmi, sign_definiteness_lmi


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def lemma_residual(rng, N=3, M=4):
    """|form(x) - (2 Re{conj(r) s} - |r|^2)| relative to the value, with s and r
    the received amplitudes on the perturbed channels computed directly."""
    h, G = crand(rng, N), crand(rng, M, N)
    f, f_l = crand(rng, N), crand(rng, N)
    v, v_l = crand(rng, M), crand(rng, M)
    dh, dG = crand(rng, N), crand(rng, M, N)
    coef = signal_form_coefficients(h, G, f, v, f_l, v_l)
    s = np.conj(h + dh) @ f + np.conj(v) @ (G + dG) @ f
    r = np.conj(h + dh) @ f_l + np.conj(v_l) @ (G + dG) @ f_l
    direct = 2 * np.real(np.conj(r) * s) - abs(r) ** 2
    got = coef.form(error_vector(dh, dG))
    return abs(got - direct) / max(1.0, abs(direct))


def _ball_draws(rng, radius, shape, draws):
    """Uniform draws in the ball, every other one pushed onto the sphere."""
    for i in range(draws):
        x = uniform_ball(rng, radius, shape)
        if i % 2 and np.linalg.norm(x) > 0:
            x = x * (radius / np.linalg.norm(x))
        yield x


def sproc_soundness_worst(rng, draws=10_000, n=4):
    """Largest t with f0(x) >= t certified over two disjoint balls, then the
    smallest sampled f0(x) - t (relative) inside those balls."""
    B = crand(rng, n, n)
    A = (B + B.conj().T) / 2
    a = crand(rng, n)
    c = float(rng.uniform(-1, 1))
    split = n // 2
    r1, r2 = rng.uniform(0.3, 1.5, 2)
    m1 = np.arange(n) < split
    prog = ConicProgram()
    t = prog.var("t")
    s_procedure_lmi(prog, "s", QuadraticForm(A, a, c - t),
                    [QuadraticForm.ball(n, r1, m1), QuadraticForm.ball(n, r2, ~m1)], "u")
    prog.maximize(t)
    sol = solve(prog)
    assert sol.ok, sol.info
    t_star = float(sol["t"])
    f0 = QuadraticForm(A, a, c)
    scale = max(1.0, abs(t_star))
    worst = np.inf
    g1 = _ball_draws(rng, r1, (split,), draws)
    g2 = _ball_draws(rng, r2, (n - split,), draws)
    for x1, x2 in zip(g1, g2):
        worst = min(worst, (f0(np.concatenate([x1, x2])) - t_star) / scale)
    return worst


def sdp_soundness_worst(rng, draws=10_000, n=3, p=2, q=2):
    """Smallest D certified to dominate E^H G F + F^H G^H E over ||G|| <= xi,
    then the smallest sampled eigenvalue of the difference (relative)."""
    E, F = crand(rng, p, n), crand(rng, q, n)
    xi = float(rng.uniform(0.3, 1.5))
    prog = ConicProgram()
    D = prog.var("D", (n, n), hermitian=True)
    sign_definiteness_lmi(prog, "sd", D, [(E, F, xi)], "w")
    prog.maximize(-cp.real(cp.trace(D)))
    sol = solve(prog)
    assert sol.ok, sol.info
    Dv = sol["D"]
    Dv = (Dv + Dv.conj().T) / 2
    scale = max(1.0, float(np.linalg.norm(Dv, 2)))
    worst = np.inf
    for G in _ball_draws(rng, xi, (p, q), draws):
        X = E.conj().T @ G @ F
        worst = min(worst, float(np.linalg.eigvalsh(Dv - X - X.conj().T)[0]) / scale)
    return worst
