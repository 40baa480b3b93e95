"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Sized for the LHV problems here (a few hundred variables, a few dozen
equality rows). Passing ``exact=True`` runs the same pivots on
``fractions.Fraction`` entries with zero tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import SolverError


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    objective: float | Fraction | None
    iterations: int
    residual: float = 0.0

    @property
    def success(self) -> bool:
        return self.status == "optimal"


def _pivot(t: np.ndarray, r: int, c: int) -> None:
    t[r] = t[r] / t[r, c]
    col = t[:, c].copy()
    col[r] = 0
    t -= np.outer(col, t[r])


def _run(t: np.ndarray, basis: list[int], n_allowed: int, tol, max_iter: int, it0: int) -> tuple[str, int]:
    m = len(basis)
    it = it0
    while True:
        if it >= max_iter:
            raise SolverError(f"simplex did not terminate within {max_iter} pivots")
        cost = t[m, :n_allowed]
        entering = next((j for j in range(n_allowed) if cost[j] < -tol), None)
        if entering is None:
            return "optimal", it
        col = t[:m, entering]
        best = None
        leave = None
        for i in range(m):
            if col[i] > tol:
                ratio = t[i, -1] / col[i]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded", it
        _pivot(t, leave, entering)
        basis[leave] = entering
        it += 1


def linprog_simplex(c, a_eq, b_eq, *, exact: bool = False, tol: float = 1e-10,
                    max_iter: int = 50_000) -> LPResult:
    """Minimize c @ x subject to a_eq @ x == b_eq, x >= 0."""
    if exact:
        conv = np.vectorize(Fraction, otypes=[object])
        a = conv(np.asarray(a_eq))
        b = conv(np.asarray(b_eq))
        cc = conv(np.asarray(c))
        zero, one, tol = Fraction(0), Fraction(1), Fraction(0)
        dtype = object
    else:
        a = np.asarray(a_eq, dtype=float)
        b = np.asarray(b_eq, dtype=float)
        cc = np.asarray(c, dtype=float)
        zero, one = 0.0, 1.0
        dtype = float
    a = np.atleast_2d(a)
    m, n = a.shape
    if b.shape != (m,) or cc.shape != (n,):
        raise ValueError("inconsistent LP dimensions")
    neg = np.array([bi < 0 for bi in b], dtype=bool)
    a = a.copy()
    b = b.copy()
    a[neg] = -a[neg]
    b[neg] = -b[neg]

    t = np.empty((m + 1, n + m + 1), dtype=dtype)
    t[...] = zero
    t[:m, :n] = a
    for i in range(m):
        t[i, n + i] = one
    t[:m, -1] = b
    t[m, :n] = -a.sum(axis=0)
    t[m, -1] = -b.sum()
    basis = list(range(n, n + m))

    status, it = _run(t, basis, n + m, tol, max_iter, 0)
    phase1 = -t[m, -1]
    if phase1 > (tol if not exact else 0) * max(1, m) * 10:
        return LPResult("infeasible", None, None, it, residual=float(phase1))

    # drive remaining artificials out of the basis, drop redundant rows
    keep_rows = []
    for i in range(m):
        if basis[i] >= n:
            j = next((j for j in range(n) if abs(t[i, j]) > tol), None)
            if j is None:
                continue
            _pivot(t, i, j)
            basis[i] = j
            it += 1
        keep_rows.append(i)
    t = np.vstack([t[keep_rows][:, list(range(n)) + [n + m]], t[m:, list(range(n)) + [n + m]]])
    basis = [basis[i] for i in keep_rows]
    m2 = len(basis)

    cb = np.array([cc[j] for j in basis], dtype=dtype) if m2 else np.zeros(0, dtype=dtype)
    t[m2, :n] = cc - (cb @ t[:m2, :n] if m2 else zero)
    t[m2, -1] = -(cb @ t[:m2, -1]) if m2 else zero
    status, it = _run(t, basis, n, tol, max_iter, it)
    if status == "unbounded":
        return LPResult("unbounded", None, None, it)
    x = np.empty(n, dtype=dtype)
    x[...] = zero
    for i, j in enumerate(basis):
        x[j] = t[i, -1]
    if not exact:
        x = np.maximum(x, 0.0)
    obj = sum(cc[j] * x[j] for j in range(n)) if exact else float(cc @ x)
    resid = float(np.max(np.abs(np.asarray(a_eq, dtype=float) @ x.astype(float) - np.asarray(b_eq, dtype=float)))) if m else 0.0
    return LPResult("optimal", x, obj, it, residual=resid)
