"""Thin conic-programming layer over cvxpy.

Subproblems are assembled as a :class:`ConicProgram` (named variables, a real
affine objective to maximize, tagged constraints) and solved by
:func:`solve`, which maps solver outcomes onto a small status vocabulary and
reports the worst constraint violation of the returned point.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max-iterations"
NUMERICAL = "numerical-failure"


@dataclass(frozen=True)
class Tolerances:
    feas: float = 1e-8
    gap_rel: float = 1e-7
    gap_abs: float = 1e-8
    max_iter: int = 200
    accept_violation: float = 1e-3   # relative to the constraint values, not its coefficients


@dataclass
class ConicProgram:
    variables: dict = field(default_factory=dict)
    objective: object = 0.0
    constraints: list = field(default_factory=list)     # (tag, cvxpy constraint)
    psd_blocks: list = field(default_factory=list)      # (tag, affine expression)

    def var(self, name, shape=(), *, complex=False, hermitian=False, nonneg=False):
        if name in self.variables:
            raise KeyError(f"duplicate variable {name!r}")
        if hermitian:
            v = cp.Variable(shape, hermitian=True, name=name)
        elif complex:
            v = cp.Variable(shape, complex=True, name=name)
        else:
            v = cp.Variable(shape, nonneg=nonneg, name=name)
        self.variables[name] = v
        return v

    def add(self, tag, *cons):
        for c in cons:
            if isinstance(c, (list, tuple)):
                self.add(tag, *c)
            else:
                self.constraints.append((tag, c))

    def psd(self, tag, expr):
        """Require the (Hermitian-by-construction) affine block expr to be PSD."""
        if expr.shape[0] != expr.shape[1]:
            raise ValueError(f"PSD block {tag!r} is not square: {expr.shape}")
        self.psd_blocks.append((tag, expr))
        self.constraints.append((tag, expr >> 0))

    def maximize(self, expr):
        self.objective = expr

    def census(self):
        counts: dict[str, int] = {}
        for tag, _ in self.constraints:
            counts[tag] = counts.get(tag, 0) + 1
        return counts

    def describe(self):
        lines = ["variables:"]
        for name, v in self.variables.items():
            kind = "hermitian" if v.is_hermitian() and v.ndim == 2 else ("complex" if v.is_complex() else "real")
            lines.append(f"  {name}: {kind} {v.shape}")
        lines.append("constraints:")
        for tag, n in self.census().items():
            lines.append(f"  {tag}: {n}")
        for tag, e in self.psd_blocks:
            lines.append(f"  psd {tag}: {e.shape[0]}x{e.shape[1]}")
        return "\n".join(lines)

    def hermitian_skew(self, rng=None, draws=3):
        """Largest skew part of the PSD blocks at random variable values."""
        rng = np.random.default_rng(0) if rng is None else rng
        saved = {n: v.value for n, v in self.variables.items()}
        worst = 0.0
        try:
            for _ in range(draws):
                for v in self.variables.values():
                    if v.is_hermitian() and v.ndim == 2:
                        X = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
                        v.value = (X + X.conj().T) / 2
                    elif v.is_complex():
                        v.value = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
                    else:
                        v.value = np.abs(rng.standard_normal(v.shape))
                for _, e in self.psd_blocks:
                    X = np.atleast_2d(e.value)
                    scale = max(1.0, np.abs(X).max())
                    worst = max(worst, np.abs(X - X.conj().T).max() / scale)
        finally:
            for n, v in self.variables.items():
                v.value = saved[n]
        return worst


@dataclass
class ConicSolution:
    status: str
    value: float
    values: dict
    max_violation: float
    solver: str = ""
    info: str = ""

    @property
    def ok(self):
        return self.status == OPTIMAL

    def __getitem__(self, name):
        return self.values[name]


_STATUS = {
    cp.OPTIMAL: OPTIMAL,
    cp.INFEASIBLE: INFEASIBLE,
    cp.UNBOUNDED: UNBOUNDED,
    cp.OPTIMAL_INACCURATE: OPTIMAL,          # re-checked against the violation test
    cp.INFEASIBLE_INACCURATE: INFEASIBLE,
    cp.UNBOUNDED_INACCURATE: UNBOUNDED,
    cp.USER_LIMIT: MAX_ITER,
}


def _violation(c):
    """Absolute violation of a cvxpy constraint at the current values."""
    if isinstance(c, cp.constraints.PSD):
        # cvxpy's own residual takes X + X^T, which drops the imaginary part of a Hermitian block
        X = c.args[0].value
        if X is None:
            return np.inf
        X = np.atleast_2d(np.asarray(X))
        return float(max(0.0, -np.linalg.eigvalsh(hermitian_part(X))[0]))
    try:
        v = c.violation()
    except (ValueError, TypeError):
        return np.inf
    v = np.asarray(v, dtype=float)
    return float(np.max(v)) if v.size else 0.0


def _scale_of(c):
    try:
        vals = [np.abs(np.asarray(a.value)).max() for a in c.args if a.value is not None]
    except (ValueError, TypeError):
        vals = []
    return max([1.0] + [float(v) for v in vals])


def max_violation(program: ConicProgram, relative=True):
    worst = 0.0
    for _, c in program.constraints:
        v = _violation(c)
        if relative:
            v /= _scale_of(c)
        worst = max(worst, v)
    return worst


# interior-point retries after a stall: shorter steps, then no equilibration
_CLARABEL_RETRIES = ({}, {"max_step_fraction": 0.9}, {"equilibrate_enable": False})


def _attempts(solvers, tol: Tolerances):
    for name in solvers:
        if name == "CLARABEL":
            for extra in _CLARABEL_RETRIES:
                yield name, {**_solver_kwargs(name, tol), **extra}
        else:
            yield name, _solver_kwargs(name, tol)


def _solver_kwargs(name, tol: Tolerances):
    if name == "CLARABEL":
        return dict(tol_feas=tol.feas, tol_gap_rel=tol.gap_rel, tol_gap_abs=tol.gap_abs,
                    max_iter=tol.max_iter)
    if name == "SCS":
        return dict(eps_abs=1e-7, eps_rel=1e-7, max_iters=5000)
    if name == "CVXOPT":
        return dict(feastol=tol.feas, reltol=tol.gap_rel, abstol=tol.gap_abs, max_iters=tol.max_iter)
    return {}


def solve(program: ConicProgram, tol: Tolerances | None = None,
          solvers=("CLARABEL",)) -> ConicSolution:
    """Solve, retrying with other settings or the next solver on numerical
    trouble. Never raises."""
    tol = tol or Tolerances()
    last = ConicSolution(NUMERICAL, np.nan, {}, np.inf, "", "not attempted")
    for name, kwargs in _attempts(solvers, tol):
        if name not in cp.installed_solvers():
            continue
        # a fresh problem each attempt: cvxpy caches the solver object and
        # refuses to change some of its settings on a re-solve
        prob = cp.Problem(cp.Maximize(program.objective), [c for _, c in program.constraints])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=name, **kwargs)
        except (cp.error.SolverError, ValueError, ArithmeticError) as exc:
            last = ConicSolution(NUMERICAL, np.nan, {}, np.inf, name, str(exc))
            continue
        status = _STATUS.get(prob.status, NUMERICAL)
        if status == OPTIMAL:
            viol = max_violation(program)
            values = {n: (None if v.value is None else np.array(v.value)) for n, v in program.variables.items()}
            if viol <= tol.accept_violation and all(x is not None for x in values.values()):
                return ConicSolution(OPTIMAL, float(prob.value), values, viol, name, prob.status)
            last = ConicSolution(NUMERICAL, float(prob.value), values, viol, name,
                                 f"{prob.status} with violation {viol:.2e}")
            continue
        last = ConicSolution(status, np.nan, {}, np.inf, name, str(prob.status))
        if status in (INFEASIBLE, UNBOUNDED):
            return last
    return last


# ---------------------------------------------------------------- linear algebra

def hermitian_part(A):
    A = np.asarray(A, complex)
    return (A + A.conj().T) / 2


def leading_eigenpair(A, tol=1e-10):
    """Largest eigenvalue of a Hermitian matrix and a unit eigenvector."""
    A = np.asarray(A, complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.conj().T).max() > tol * scale:
        raise ValueError("matrix is not Hermitian")
    w, V = np.linalg.eigh(hermitian_part(A))
    return float(w[-1]), V[:, -1]


def trace_ratio(A):
    """lambda_max(A) / Tr(A) for PSD A (1 for the zero matrix)."""
    tr = float(np.trace(A).real)
    if tr <= 0:
        return 1.0
    return leading_eigenpair(A, tol=1e-6)[0] / tr
