"""Time-sharing between SIC decode orders that share one power allocation.

When several users carry the same rate price no single decode order need
meet the targets.  The orders that respect the cluster sequence are
enumerated, and the smallest set of them whose time-weighted vertex rates
reach the targets is found by enumerating supports of increasing size with
an LP feasibility check for each.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .capacity import DecodeOrder
from .errors import DomainError, InfeasibleError, ShapeError, SizeError
from .lp import simplex

MAX_ORDERS = 720
MAX_SUPPORTS = 200_000


def candidate_orders(clusters) -> list[DecodeOrder]:
    """Every decode order that keeps the cluster sequence, permuting inside clusters."""
    clusters = [tuple(int(u) for u in c) for c in clusters]
    count = math.prod(math.factorial(len(c)) for c in clusters)
    if count > MAX_ORDERS:
        raise SizeError(
            f"{count} candidate orders exceed the limit of {MAX_ORDERS}; "
            "clusters are too coarse, consider a smaller cluster_tol"
        )
    per = [list(itertools.permutations(c)) for c in clusters]
    return [tuple(u for block in combo for u in block) for combo in itertools.product(*per)]


@dataclass
class TimeShareProblem:
    orders: list
    vertex_rates: np.ndarray  # (N_o, N)
    targets: np.ndarray

    def __post_init__(self):
        self.vertex_rates = np.atleast_2d(np.asarray(self.vertex_rates, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float)
        if len(self.orders) < 1:
            raise DomainError("need at least one candidate order")
        if self.vertex_rates.shape != (len(self.orders), len(self.targets)):
            raise ShapeError(
                f"vertex rates must be ({len(self.orders)}, {len(self.targets)}), "
                f"got {self.vertex_rates.shape}"
            )


@dataclass
class TimeShareSolution:
    orders: list
    weights: np.ndarray  # w_j, one per candidate order
    active: np.ndarray  # y_j
    achieved: np.ndarray

    @property
    def support(self) -> int:
        return int(self.active.sum())

    def schedule(self) -> list[dict]:
        return [
            {"order": list(o), "weight": float(w)}
            for o, w, y in zip(self.orders, self.weights, self.active) if y
        ]


def _feasible(R, r_th, tol, exact):
    """Weights on the rows of R meeting the targets, or None."""
    k, N = R.shape
    if exact:
        # w >= 0, sum w = 1, R^T w = r_th
        A = np.vstack([np.ones(k), R.T])
        b = np.concatenate([[1.0], r_th])
    else:
        # R^T w - s = r_th - tol/2, s >= 0; the other half absorbs rounding in R^T w
        A = np.zeros((N + 1, k + N))
        A[0, :k] = 1.0
        A[1:, :k] = R.T
        A[1:, k:] = -np.eye(N)
        b = np.concatenate([[1.0], r_th - 0.5 * tol])
    res = simplex(np.zeros(A.shape[1]), A, b)
    if res.status != "optimal":
        return None
    w = np.clip(res.x[:k], 0.0, None)
    w /= w.sum()
    ach = R.T @ w
    if exact:
        if np.max(np.abs(ach - r_th)) > tol:
            return None
    elif np.any(ach < r_th - tol):
        return None
    return w


def separation_certificate(R, r_th, exact=False):
    """Direction d (sum |d| = 1) maximizing ``d.r_th - max_j d.R_j``.

    A positive margin proves the targets lie outside the achievable hull.
    """
    R = np.atleast_2d(R)
    k, N = R.shape
    if exact:
        # variables: d+ (N), d- (N), t+ , t-, slacks (k)
        nv = 2 * N + 2 + k
        A = np.zeros((k + 1, nv))
        b = np.zeros(k + 1)
        for j in range(k):
            # d.(R_j - r_th) + t + s_j = 0
            A[j, :N] = R[j] - r_th
            A[j, N:2 * N] = -(R[j] - r_th)
            A[j, 2 * N] = 1.0
            A[j, 2 * N + 1] = -1.0
            A[j, 2 * N + 2 + j] = 1.0
        A[k, : 2 * N] = 1.0
        b[k] = 1.0
        c = np.zeros(nv)
        c[2 * N], c[2 * N + 1] = -1.0, 1.0
        res = simplex(c, A, b)
        d = res.x[:N] - res.x[N:2 * N]
        t = res.x[2 * N] - res.x[2 * N + 1]
    else:
        nv = N + 2 + k
        A = np.zeros((k + 1, nv))
        b = np.zeros(k + 1)
        for j in range(k):
            A[j, :N] = R[j] - r_th
            A[j, N] = 1.0
            A[j, N + 1] = -1.0
            A[j, N + 2 + j] = 1.0
        A[k, :N] = 1.0
        b[k] = 1.0
        c = np.zeros(nv)
        c[N], c[N + 1] = -1.0, 1.0
        res = simplex(c, A, b)
        d = res.x[:N]
        t = res.x[N] - res.x[N + 1]
    return d, float(t)


def solve_timeshare(problem: TimeShareProblem, tol: float = 1e-9, exact: bool = False) -> TimeShareSolution:
    """Fewest decode orders whose time-share reaches the targets.

    By default the targets are met componentwise with surplus allowed
    (``R^T w >= r_th - tol``); ``exact=True`` demands ``|R^T w - r_th| <= tol``.
    """
    R, r_th = problem.vertex_rates, problem.targets
    n_o, N = R.shape
    full = _feasible(R, r_th, tol, exact)
    if full is None:
        d, margin = separation_certificate(R, r_th, exact)
        raise InfeasibleError(
            f"targets lie outside the time-share hull of {n_o} orders (margin {margin:.3g})",
            certificate={"direction": d, "margin": margin},
        )
    # a basic solution of the full LP has at most N + 1 non-zero weights
    budget = MAX_SUPPORTS
    for size in range(1, min(n_o, N + 1) + 1):
        for subset in itertools.combinations(range(n_o), size):
            budget -= 1
            if budget < 0:
                break
            w = _feasible(R[list(subset)], r_th, tol, exact)
            if w is not None:
                weights = np.zeros(n_o)
                weights[list(subset)] = w
                active = np.zeros(n_o, dtype=int)
                active[list(subset)] = 1
                return TimeShareSolution(list(problem.orders), weights, active, R.T @ weights)
        if budget < 0:
            break
    weights = full
    active = (weights > 0).astype(int)
    return TimeShareSolution(list(problem.orders), weights, active, R.T @ weights)
