"""Quadratic forms and the two LMI builders of the robust reformulation.

Entries of a form may be numpy constants or cvxpy affine expressions; the
builders only need the resulting blocks to be affine in the decision
variables. cvxpy constrains the Hermitian part of a complex PSD block, so
blocks that are Hermitian by construction are used as they are.
"""
from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np


def is_expr(x):
    return isinstance(x, cp.Expression)


def conj(x):
    return cp.conj(x) if is_expr(x) else np.conj(x)


def column(x, n=None):
    """x as an (n, 1) column."""
    if is_expr(x):
        return cp.reshape(x, (x.size, 1), order="F")
    return np.asarray(x).reshape(-1, 1)


def outer(u, w):
    """u w^H for vectors that may be expressions (at most one of them)."""
    if not is_expr(u) and not is_expr(w):
        return np.outer(np.asarray(u), np.conj(np.asarray(w)))
    return column(u) @ column(conj(w)).T


def scalar_block(c):
    return cp.reshape(c, (1, 1), order="F") if is_expr(c) else np.array([[c]])


def _any_expr(*xs):
    return any(is_expr(x) for x in xs)


def stack(blocks):
    """np.block or cp.bmat, whichever the entries need."""
    if any(is_expr(b) for row in blocks for b in row):
        return cp.bmat(blocks)
    return np.block(blocks)


@dataclass
class QuadraticForm:
    """x -> x^H A x + 2 Re{a^H x} + c."""
    A: object
    a: object
    c: object

    @property
    def dim(self):
        return self.A.shape[0]

    def check(self, tol=1e-12):
        """Raise if a numeric A is not Hermitian."""
        if is_expr(self.A):
            return self
        A = np.asarray(self.A)
        scale = max(1.0, float(np.abs(A).max())) if A.size else 1.0
        if A.ndim != 2 or A.shape[0] != A.shape[1] or np.abs(A - A.conj().T).max(initial=0.0) > tol * scale:
            raise ValueError("quadratic form matrix must be square and Hermitian")
        return self

    def block(self):
        """[[A, a], [a^H, c]]."""
        n = self.dim
        a = column(self.a)
        if a.shape[0] != n:
            raise ValueError(f"linear term has length {a.shape[0]}, expected {n}")
        return stack([[self.A, a], [column(conj(self.a)).T, scalar_block(self.c)]])

    def __call__(self, x):
        x = np.asarray(x, complex)
        A, a, c = (np.asarray(v.value if is_expr(v) else v) for v in (self.A, self.a, self.c))
        return float(np.real(x.conj() @ A @ x + 2 * np.real(np.vdot(a, x)) + c))

    def rescaled(self, scale):
        """The same form in y = x / scale (elementwise, scale > 0)."""
        S = np.diag(np.asarray(scale, float))
        return QuadraticForm(S @ self.A @ S, S @ self.a, self.c)

    def shifted(self, delta):
        """Same form plus the scalar delta."""
        return QuadraticForm(self.A, self.a, self.c + delta)

    @classmethod
    def ball(cls, dim, radius, mask=None):
        """radius^2 - x^H C x >= 0 with C the 0/1 diagonal selecting `mask`."""
        mask = np.ones(dim, bool) if mask is None else np.asarray(mask, bool)
        return cls(-np.diag(mask.astype(float)), np.zeros(dim), float(radius) ** 2)


def s_procedure_lmi(prog, tag, f0: QuadraticForm, constraints, name, gram=None):
    """f0(x) >= 0 whenever every constraint form is >= 0, certified by

        block(f0) - sum_j u_j block(f_j) - L L^H  >= 0,   u_j >= 0,

    where the optional factor L (written through a Schur complement) lets a
    form whose quadratic part is -L L^H stay affine in L. The constraint
    blocks must be constant. Returns the multiplier variable.
    """
    constraints = list(constraints)
    if not constraints:
        raise ValueError("the S-procedure needs at least one constraint form")
    J = len(constraints)
    u = prog.var(name, J, nonneg=True)
    u.value = np.ones(J)
    blk = f0.block()
    for j, fj in enumerate(constraints):
        if _any_expr(fj.A, fj.a, fj.c):
            raise ValueError("constraint forms of the S-procedure must be constant")
        if fj.dim != f0.dim:
            raise ValueError("constraint form dimension does not match f0")
        blk = blk - u[j] * fj.block()
    if gram is not None:
        n = blk.shape[0]
        r = gram.shape[1]
        if gram.shape[0] != n:
            raise ValueError("Gram factor has the wrong number of rows")
        blk = cp.bmat([[blk, gram], [conj(gram).T, np.eye(r)]])
    prog.psd(tag, blk)
    return u


def sign_definiteness_lmi(prog, tag, D, pairs, name):
    """D >= sum_j (E_j^H G_j F_j + F_j^H G_j^H E_j) for all ||G_j||_F <= xi_j,
    certified by the bordered block

        [[D - sum_j w_j F_j^H F_j, -xi_1 E_1^H, ..., -xi_J E_J^H],
         [-xi_1 E_1,               w_1 I,       ...,  0          ],
         ...
         [-xi_J E_J,               0,           ...,  w_J I      ]] >= 0.

    pairs = [(E_j, F_j, xi_j)]; F_j must be constant so w_j F_j^H F_j stays
    affine (swap the roles of E and F, with G_j -> G_j^H, when only E is).
    Returns the multiplier variable.
    """
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ValueError("D must be square")
    J = len(pairs)
    w = prog.var(name, J, nonneg=True)
    w.value = np.ones(J)
    top = D
    sizes = []
    for j, (E, F, xi) in enumerate(pairs):
        if is_expr(F):
            raise ValueError("F_j must be constant")
        F = np.atleast_2d(np.asarray(F))
        if F.shape[1] != n or E.shape[1] != n:
            raise ValueError(f"pair {j}: E and F need {n} columns")
        top = top - w[j] * (F.conj().T @ F)
        sizes.append(E.shape[0])
    rows = [[top] + [-xi * conj(E).T for E, _, xi in pairs]]
    for j, (E, _, xi) in enumerate(pairs):
        row = [-xi * E]
        for i, p in enumerate(sizes):
            row.append(w[j] * np.eye(p) if i == j else np.zeros((sizes[j], p)))
        rows.append(row)
    blk = cp.bmat(rows)
    prog.psd(tag, blk)
    return w


def sign_definiteness_dim(n, pairs):
    """Side length of the bordered block for a D of size n."""
    return n + sum(E.shape[0] for E, _, _ in pairs)
