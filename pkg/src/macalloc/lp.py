"""Small dense two-phase simplex for standard-form LPs.

    minimize c.x  subject to  A x = b,  x >= 0

Bland's rule keeps it cycle-free; problems here have at most a few dozen
columns, so a full tableau is fine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible", "unbounded"
    x: np.ndarray | None
    objective: float
    infeasibility: float = 0.0  # phase-1 optimum (sum of artificials)


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _run(T, basis, ncols, eps, max_iter):
    """Minimize the objective in the last row of T over columns < ncols."""
    for _ in range(max_iter):
        cost = T[-1, :ncols]
        entering = next((j for j in range(ncols) if cost[j] < -eps), None)
        if entering is None:
            return "optimal"
        colv = T[:-1, entering]
        rows = np.flatnonzero(colv > eps)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / colv[rows]
        rmin = ratios.min()
        tied = rows[ratios <= rmin + eps * max(1.0, abs(rmin))]
        leave = min(tied, key=lambda r: basis[r])
        _pivot(T, leave, entering)
        basis[leave] = entering
    raise RuntimeError("simplex iteration limit reached")


def simplex(c, A_eq, b_eq, eps: float = 1e-12, max_iter: int = 10_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A_eq, dtype=float)).copy()
    b = np.asarray(b_eq, dtype=float).copy()
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1 tableau: [A | I | b], objective = sum of artificials
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _run(T, basis, n + m, eps, max_iter)
    infeas = -T[-1, -1]
    tol = 1e-9 * max(1.0, float(np.abs(b).max(initial=0.0)))
    if infeas > tol:
        return LPResult("infeasible", None, np.inf, infeas)

    # drive remaining artificials out of the basis where possible
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(T[r, :n]) > eps)
            if cand.size:
                _pivot(T, r, cand[0])
                basis[r] = int(cand[0])
    keep = [r for r in range(m) if basis[r] < n]  # rows still on artificials are redundant
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[r] for r in keep]
    T2[-1, :n] = c
    for r, j in enumerate(basis2):
        T2[-1] -= c[j] * T2[r]
    status = _run(T2, basis2, n, eps, max_iter)
    x = np.zeros(n)
    for r, j in enumerate(basis2):
        x[j] = T2[r, -1]
    if status == "unbounded":
        return LPResult("unbounded", x, -np.inf, infeas)
    return LPResult("optimal", x, float(c @ x), infeas)
