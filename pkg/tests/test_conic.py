import cvxpy as cp
import numpy as np
import pytest

from mfris.conic import (INFEASIBLE, OPTIMAL, UNBOUNDED, ConicProgram, hermitian_part,
                         leading_eigenpair, max_violation, solve, trace_ratio)


def test_socp_solution():
    prog = ConicProgram()
    x = prog.var("x", 2)
    prog.add("ball", cp.norm(x) <= 1)
    prog.maximize(x[0] + x[1])
    sol = solve(prog)
    assert sol.ok and sol.status == OPTIMAL
    assert np.allclose(sol["x"], [2 ** -0.5] * 2, atol=1e-6)
    assert abs(sol.value - 2 ** 0.5) < 1e-6
    assert sol.max_violation < 1e-6


def test_complex_psd_program():
    # maximize Re <A, X> over unit-trace Hermitian PSD X: the top eigenvalue of A
    rng = np.random.default_rng(0)
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    A = hermitian_part(B)
    prog = ConicProgram()
    X = prog.var("X", (3, 3), hermitian=True)
    prog.psd("psd", X)
    prog.add("trace", cp.real(cp.trace(X)) == 1)
    prog.maximize(cp.real(cp.trace(A @ X)))
    sol = solve(prog)
    assert sol.ok
    assert abs(sol.value - np.linalg.eigvalsh(A)[-1]) < 1e-6
    assert trace_ratio(sol["X"]) > 0.999
    assert prog.hermitian_skew() < 1e-12


def test_infeasible_and_unbounded():
    prog = ConicProgram()
    x = prog.var("x")
    prog.add("a", x >= 1, x <= 0)
    prog.maximize(x)
    assert solve(prog).status == INFEASIBLE
    prog = ConicProgram()
    x = prog.var("x")
    prog.maximize(x)
    prog.add("a", x >= 0)
    assert solve(prog).status == UNBOUNDED


def test_duplicate_variable_and_census():
    prog = ConicProgram()
    x = prog.var("x", 2, nonneg=True)
    with pytest.raises(KeyError):
        prog.var("x")
    prog.add("cap", [x[0] <= 1, x[1] <= 1])
    assert prog.census() == {"cap": 2}
    assert "x: real (2,)" in prog.describe()
    with pytest.raises(ValueError):
        prog.psd("bad", cp.Variable((2, 3)))


def test_violation_of_hermitian_block():
    # an indefinite Hermitian value must count as violated even with a large imaginary part
    prog = ConicProgram()
    X = prog.var("X", (2, 2), hermitian=True)
    prog.psd("psd", X)
    X.value = np.array([[1, 2j], [-2j, 1]])
    assert max_violation(prog, relative=False) == pytest.approx(1.0)


def test_leading_eigenpair():
    A = np.diag([1.0, 3.0, 2.0])
    lam, v = leading_eigenpair(A)
    assert lam == pytest.approx(3.0) and abs(abs(v[1]) - 1) < 1e-12
    with pytest.raises(ValueError):
        leading_eigenpair(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        leading_eigenpair(np.ones((2, 3)))
    assert trace_ratio(np.zeros((2, 2))) == 1.0
