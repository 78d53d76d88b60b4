"""Minimum weighted-energy allocation over the MAC polymatroid.

Problem (scalar power per user per tone)::

    minimize    sum_i alpha_i sum_j p[i, j]
    subject to  sum_{i in W} r_i <= sum_j log2 det(I + Z^-1 sum_{i in W} p[i, j] g g^H)  for all W
                r_i >= r_th_i,  p >= 0

The solver works in two phases.  A dual phase ascends on the per-user rate
prices ``theta``; for fixed prices every tone decouples into a concave
weighted-rate/energy trade-off evaluated at the SIC vertex whose decode
order sorts users by ascending ``theta``.  A primal phase then polishes the
averaged dual iterate with SLSQP on the subset-capacity form, scales the
result onto the boundary, and recovers exact prices from the stationarity
conditions by non-negative least squares.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, lsq_linear, minimize, nnls

from . import capacity
from .capacity import LN2, DecodeOrder, PowerAllocation
from .channel import ChannelSet
from .errors import ConvergenceError, DomainError, InfeasibleError, ShapeError


@dataclass(frozen=True)
class SolverOptions:
    rel_gap: float = 1e-4
    rate_tol: float = 1e-6
    cluster_tol: float = 1e-4
    max_outer: int = 5000
    max_inner: int = 500
    inner_tol: float = 1e-10
    step0: float = 1.0
    # dual phase stops once averaged rates are within this relative distance of the targets
    dual_tol: float = 2e-3
    polish: bool = True
    # with polishing on, the dual phase only supplies a warm start
    warm_outer: int = 200
    power_cap: float | None = None  # per-user energy cap, summed over tones


@dataclass
class MinPmacSolution:
    alloc: PowerAllocation
    duals: np.ndarray
    clusters: list[tuple[int, ...]]
    achieved: np.ndarray
    objective: float
    targets: np.ndarray
    timeshare: object | None = None  # TimeShareSolution when one order is not enough
    diagnostics: dict = field(default_factory=dict)

    @property
    def decode_order(self) -> DecodeOrder:
        return tuple(u for c in self.clusters for u in c)


# --- per-tone weighted trade-off ------------------------------------------


def _dtheta(theta, order):
    th = theta[list(order)]
    return np.diff(np.concatenate([[0.0], th]))


def _levels(G, Z, p, order):
    """Inverse chain covariances and log-dets for a decode order.

    Returns ``Ainv`` of shape (N, S, L, L) for positions 0..N-1 and ``ld``
    of shape (N + 1, S) with ``ld[N] = log2 det Z``.
    """
    C = p[:, :, None, None] * np.einsum("usl,usm->uslm", G, G.conj())
    C = C[list(order)]
    A = np.cumsum(C[::-1], axis=0)[::-1] + Z
    S = p.shape[1]
    ld = capacity.logdet2(np.concatenate([A, np.broadcast_to(Z, (1, S) + Z.shape)], axis=0))
    return np.linalg.inv(A), ld


def _objective(G, Z, p, theta, alpha, order, dth):
    _, ld = _levels(G, Z, p, order)
    return dth @ (ld[:-1] - ld[-1]) - alpha @ p


def _inner(G, Z, theta, alpha, p0=None, max_iter=500, tol=1e-10):
    """Maximize ``sum_i theta_i r_i - sum_i alpha_i p_i`` on every tone.

    Rates are taken at the SIC vertex of the ascending-theta order, which
    makes the per-tone objective concave.  Projected Newton with an Armijo
    search on the projection arc; all tones are solved as one batch.
    Returns (p, per-tone rates, iterations, relative KKT residual).
    """
    N, S, _ = G.shape
    order = tuple(int(u) for u in np.lexsort((np.arange(N), theta)))
    pos = np.empty(N, dtype=int)
    pos[list(order)] = np.arange(N)
    dth = _dtheta(theta, order)
    # weight of level k in user u's derivative: dth[k] if level k contains u
    W = np.where(np.arange(N)[None, :] <= pos[:, None], dth[None, :], 0.0)  # (u, k)
    live = theta > 0
    p = np.zeros((N, S)) if p0 is None else np.where(live[:, None], np.maximum(p0, 0.0), 0.0)
    a = alpha[:, None]

    def grad_hess(p):
        Ainv, ld = _levels(G, Z, p, order)
        X = np.einsum("usl,kslm,vsm->uvks", G.conj(), Ainv, G)  # g_u^H A_k^-1 g_v
        q = np.real(np.einsum("uuks->uks", X))
        grad = np.einsum("uk,uks->us", W, q) / LN2 - a
        Wm = np.minimum.outer(pos, pos)  # level k contains u and v iff k <= min(pos)
        mask = np.arange(N)[None, None, :] <= Wm[:, :, None]
        coef = np.where(mask, dth[None, None, :], 0.0)
        H = -np.einsum("uvk,uvks->suv", coef, np.abs(X) ** 2) / LN2
        f = dth @ (ld[:-1] - ld[-1]) - np.sum(a * p, axis=0)
        return f, grad, H

    it = 0
    res = math.inf
    stalled = np.zeros(S, dtype=bool)  # tones whose line search can no longer improve
    f, grad, H = grad_hess(p)
    for it in range(1, max_iter + 1):
        pg = np.where(p > 0, grad, np.maximum(grad, 0.0))
        pg[~live] = 0.0
        res_tone = np.max(np.abs(pg) / a, axis=0) if N else np.zeros(S)
        res = float(res_tone.max())
        work = (res_tone > tol) & ~stalled
        if not work.any():
            break
        free = ((p > 0) | (grad > 0)) & live[:, None]  # (u, s)
        d = np.zeros((N, S))
        for s in np.flatnonzero(work):
            fr = np.flatnonzero(free[:, s])
            if fr.size == 0:
                continue
            Hs = -H[s][np.ix_(fr, fr)]
            lam = 1e-12 * max(np.max(np.abs(np.diag(Hs))), 1e-300)
            try:
                d[fr, s] = np.linalg.solve(Hs + lam * np.eye(fr.size), grad[fr, s])
            except np.linalg.LinAlgError:
                d[fr, s] = grad[fr, s] / np.maximum(np.diag(Hs), 1e-300)
            if np.dot(d[fr, s], grad[fr, s]) <= 0:  # not an ascent direction: fall back to diagonal
                d[fr, s] = grad[fr, s] / np.maximum(np.diag(Hs), 1e-300)
        step = np.ones(S)
        accepted = ~work
        p_new = p.copy()
        for _ in range(40):
            trial = np.where(accepted[None, :], p_new, np.maximum(p + step[None, :] * d, 0.0))
            trial[~live] = 0.0
            _, ld = _levels(G, Z, trial, order)
            f_t = dth @ (ld[:-1] - ld[-1]) - np.sum(a * trial, axis=0)
            ok = f_t >= f + 1e-4 * np.sum(grad * (trial - p), axis=0) - 1e-15 * np.abs(f)
            newly = ok & ~accepted
            p_new[:, newly] = trial[:, newly]
            accepted |= ok
            if accepted.all():
                break
            step = np.where(accepted, step, step * 0.5)
        stalled |= ~accepted
        p = p_new
        f_old = f
        f, grad, H = grad_hess(p)
        # objective no longer moving at working precision
        stalled |= work & (f - f_old <= 1e-14 * np.maximum(np.abs(f), 1.0))
    _, ld = _levels(G, Z, p, order)
    r = np.empty((N, S))
    r[list(order)] = np.maximum(ld[:-1] - ld[1:], 0.0)
    return p, r, it, res


def inner_weighted_tradeoff(channels: ChannelSet, duals, alpha, tone: int, max_iter: int = 500, tol: float = 1e-10):
    """Powers and SIC rates on one tone maximizing ``theta . r - alpha . p``."""
    theta = np.asarray(duals, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    N = channels.num_users
    if theta.shape != (N,) or alpha.shape != (N,):
        raise ShapeError(f"duals and alpha must have length {N}")
    if np.any(theta < 0):
        raise DomainError("duals must be non-negative")
    if np.any(alpha <= 0):
        raise DomainError("alpha must be strictly positive")
    G = channels.gains[:, tone:tone + 1, :]
    p, r, it, res = _inner(G, channels.noise_cov, theta, alpha, None, max_iter, tol)
    if res > tol:
        raise ConvergenceError(f"inner trade-off did not converge (residual {res:.3g})", res, p[:, 0])
    return p[:, 0], r[:, 0]


# --- decode order from prices ---------------------------------------------


def decode_order_from_duals(duals, cluster_tol: float = 1e-4) -> list[tuple[int, ...]]:
    """Ordered partition of users: ascending price, near-equal prices grouped.

    The smallest price is decoded first and the largest last.  Consecutive
    users whose prices differ by at most ``cluster_tol * max(1, max theta)``
    share a cluster.
    """
    theta = np.asarray(duals, dtype=float)
    if np.any(theta < 0):
        raise DomainError("duals must be non-negative")
    order = np.lexsort((np.arange(len(theta)), theta))
    scale = cluster_tol * max(1.0, float(theta.max()) if len(theta) else 1.0)
    clusters: list[list[int]] = []
    prev = None
    for u in order:
        if prev is not None and theta[u] - theta[prev] <= scale:
            clusters[-1].append(int(u))
        else:
            clusters.append([int(u)])
        prev = u
    return [tuple(c) for c in clusters]


# --- helpers ----------------------------------------------------------------


def _check_inputs(channels, targets, alpha):
    N = channels.num_users
    r_th = np.asarray(targets, dtype=float).reshape(-1)
    if r_th.shape != (N,):
        raise ShapeError(f"targets must have length {N}")
    if np.any(r_th < 0) or not np.all(np.isfinite(r_th)):
        raise DomainError("rate targets must be finite and non-negative")
    alpha = np.ones(N) if alpha is None else np.asarray(alpha, dtype=float)
    if alpha.shape != (N,):
        raise ShapeError(f"alpha must have length {N}")
    if np.any(alpha <= 0):
        raise DomainError("alpha must be strictly positive")
    return r_th, alpha


def mbps_to_bits(channels: ChannelSet, rates_mbps) -> np.ndarray:
    """Convert per-user Mbps into bits per tone-use summed over tones."""
    return np.asarray(rates_mbps, dtype=float) / channels.mbps_per_bit()


def _water_level(eff_row, rate):
    """Level mu with sum_j log2(max(1, mu * a_j)) = rate."""
    a = np.sort(eff_row[eff_row > 0])[::-1]
    logs = np.log2(a)
    for k in range(1, len(a) + 1):
        mu = 2.0 ** ((rate - logs[:k].sum()) / k)
        if k == len(a) or mu * a[k] <= 1.0:
            return mu
    return math.inf


def _initial_prices(eff, r_th, alpha):
    theta = np.zeros(len(r_th))
    for i in np.flatnonzero(r_th > 0):
        theta[i] = alpha[i] * LN2 * _water_level(eff[i], r_th[i])
    return theta


def _subset_terms(G, Z, p, subset):
    C = np.einsum("us,usl,usm->slm", p[list(subset)], G[list(subset)], G[list(subset)].conj())
    A = C + Z
    ld = capacity.logdet2(A) - capacity.logdet2(Z[None])[0]
    Ainv = np.linalg.inv(A)
    q = np.real(np.einsum("usl,slm,usm->us", G.conj(), Ainv, G))
    return ld, q


def _margins(G, Z, p, subsets, req):
    return np.array([_subset_terms(G, Z, p, W)[0].sum() - req[k] for k, W in enumerate(subsets)])


# --- dual phase ---------------------------------------------------------------


def _dual_phase(channels, r_th, alpha, opts):
    G, Z = channels.gains, channels.noise_cov
    eff = channels.effective_gains()
    active = r_th > 0
    theta = _initial_prices(eff, r_th, alpha)
    p = None
    hist_p, hist_r = [], []
    it = 0
    rel_err = math.inf
    n_outer = min(opts.max_outer, opts.warm_outer) if opts.polish else opts.max_outer
    for it in range(1, n_outer + 1):
        p, r_tone, _, _ = _inner(G, Z, theta, alpha, p, opts.max_inner, opts.inner_tol)
        r = r_tone.sum(axis=1)
        hist_p.append(p)
        hist_r.append(r)
        start = len(hist_r) // 2
        r_avg = np.mean(hist_r[start:], axis=0)
        rel_err = float(np.max(np.abs(r_avg - r_th)[active] / r_th[active]))
        if it >= 5 and rel_err < opts.dual_tol:
            break
        rel = np.clip((r_th - r)[active] / r_th[active], -1.0, 1.0)
        theta[active] *= np.exp(opts.step0 / math.sqrt(it) * rel)
    start = len(hist_p) // 2
    p_avg = np.mean(hist_p[start:], axis=0)
    return theta, p_avg, it, rel_err


# --- primal polish --------------------------------------------------------------


def _polish(channels, r_th, alpha, p0, opts, keep=None):
    G, Z = channels.gains, channels.noise_cov
    N, S, _ = G.shape
    eff = channels.effective_gains()
    users = [i for i in range(N) if r_th[i] > 0]
    subsets = [W for k in range(1, len(users) + 1) for W in itertools.combinations(users, k)]
    req = np.array([r_th[list(W)].sum() for W in subsets])
    var = np.zeros((N, S), dtype=bool)
    var[users] = True
    var &= eff > 0
    if keep is not None:
        var &= keep
    # x = p * eff / unit: received SNR in units that keep the variables near 1
    unit = float(np.max(np.maximum(p0, 0.0) * eff, initial=0.0))
    if not unit > 0:
        unit = 2.0 ** (float(np.max(r_th)) / S) - 1.0
    scale = np.where(var, eff, 1.0) / unit
    idx = np.flatnonzero(var.ravel())
    cost = (alpha[:, None] / scale).ravel()[idx]

    def to_p(x):
        p = np.zeros(N * S)
        p[idx] = np.maximum(x, 0.0) / scale.ravel()[idx]
        return p.reshape(N, S)

    x0 = (np.maximum(p0, 0.0) * scale).ravel()[idx]
    obj0 = float(cost @ x0) if float(cost @ x0) > 0 else 1.0

    def fun(x):
        return float(cost @ x) / obj0, cost / obj0

    def cons(x):
        p = to_p(x)
        return np.array([_subset_terms(G, Z, p, W)[0].sum() for W in subsets]) / req - 1.0

    def cons_jac(x):
        p = to_p(x)
        J = np.zeros((len(subsets), N, S))
        for k, W in enumerate(subsets):
            _, q = _subset_terms(G, Z, p, W)
            J[k, list(W)] = q[list(W)] / LN2 / req[k]
        return (J / scale[None]).reshape(len(subsets), -1)[:, idx]

    constraints = [{"type": "ineq", "fun": cons, "jac": cons_jac}]
    if opts.power_cap is not None:
        owner = np.repeat(np.arange(N), S)[idx]

        def cap_fun(x):
            e = np.bincount(owner, weights=np.maximum(x, 0) / scale.ravel()[idx], minlength=N)
            return (opts.power_cap - e[users]) / opts.power_cap

        def cap_jac(x):
            J = np.zeros((len(users), len(idx)))
            for k, u in enumerate(users):
                J[k, owner == u] = -1.0 / scale.ravel()[idx][owner == u] / opts.power_cap
            return J

        constraints.append({"type": "ineq", "fun": cap_fun, "jac": cap_jac})
    res = minimize(
        fun, x0, jac=True, method="SLSQP", bounds=[(0.0, None)] * len(idx),
        constraints=constraints, options={"ftol": 1e-15, "maxiter": 1000},
    )
    p = to_p(res.x)
    # SLSQP leaves crumbs of order 1e-10 on tones a user should not use
    p = np.where(p > 1e-7 * p.max(axis=1, keepdims=True), p, 0.0)

    # scale onto the boundary: smallest t with every subset constraint met
    def margin(t):
        return float(np.min(_margins(G, Z, t * p, subsets, req) / req))

    if not np.any(p > 0):
        p = np.maximum(p0, 0.0)
    lo, hi = 0.0, 1.0
    while margin(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            raise InfeasibleError("could not reach the rate targets by scaling the polished powers")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if margin(mid) >= 0:
            hi = mid
        else:
            lo = mid
    p = hi * p
    if opts.power_cap is not None and np.any(p.sum(axis=1) > opts.power_cap * (1 + 1e-9)):
        raise InfeasibleError(
            f"targets need per-user energy {p.sum(axis=1).max():.4g} above the cap {opts.power_cap:.4g}"
        )
    return p, int(res.nit), bool(res.success)


def _nonneg_lsq(A, b):
    try:
        return nnls(A, b, maxiter=50 * A.shape[1] + 100)
    except RuntimeError:  # active-set method cycling on a badly scaled system
        x = lsq_linear(A, b, bounds=(0.0, np.inf), method="bvls").x
        return x, float(np.linalg.norm(A @ x - b))


def _recover_duals(channels, p, r_th, alpha, hint):
    """Prices from stationarity: alpha_u = sum_{k <= pos(u)} dtheta_k q_{u,k,j}/ln2."""
    G, Z = channels.gains, channels.noise_cov
    N = channels.num_users
    users = [u for u in hint if r_th[u] > 0]
    idle = [u for u in range(N) if r_th[u] <= 0]
    n = len(users)
    pmax = p.max(axis=1, keepdims=True)
    on = (p > 1e-6 * np.maximum(pmax, 1e-300)) & (p > 0)
    candidates = [tuple(users)]
    if n <= 6:
        candidates += [c for c in itertools.permutations(users) if c != tuple(users)]
    best = None
    for cand in candidates:
        order = tuple(idle) + cand
        Ainv, _ = _levels(G, Z, p, order)
        q = np.real(np.einsum("usl,kslm,usm->uks", G.conj(), Ainv, G))[:, len(idle):, :]
        rows, rhs = [], []
        for pos_u, u in enumerate(cand):
            for j in np.flatnonzero(on[u]):
                row = np.zeros(n)
                row[: pos_u + 1] = q[u, : pos_u + 1, j] / LN2
                rows.append(row / alpha[u])
                rhs.append(1.0)
        if not rows:
            continue
        dth, resid = _nonneg_lsq(np.array(rows), np.array(rhs))
        resid = resid / math.sqrt(len(rows))
        if best is None or resid < best[0] - 1e-9:
            best = (resid, cand, dth)
    theta = np.zeros(N)
    if best is None:
        return theta, math.nan
    resid, cand, dth = best
    theta[list(cand)] = np.cumsum(dth)
    return theta, float(resid)


def _dual_bound(channels, theta, r_th, alpha, p_start, opts):
    p, _, _, _ = _inner(channels.gains, channels.noise_cov, theta, alpha, p_start, opts.max_inner, opts.inner_tol)
    order = tuple(int(u) for u in np.lexsort((np.arange(len(theta)), theta)))
    F = _objective(channels.gains, channels.noise_cov, p, theta, alpha, order, _dtheta(theta, order)).sum()
    return float(theta @ r_th - F)


def _achieve(channels, p, clusters, theta, r_th, rate_tol):
    """Rates attained at the returned powers: one SIC vertex or a time-share."""
    from .timeshare import TimeShareProblem, candidate_orders, solve_timeshare

    clusters = [tuple(c) for c in clusters]
    merged = 0
    while True:
        orders = candidate_orders(clusters)
        R = np.array([capacity.sic_rates(channels, p, o) for o in orders])
        if len(orders) == 1 and np.all(R[0] >= r_th - rate_tol):
            return R[0], None, clusters, merged
        problem = TimeShareProblem(orders, R, r_th)
        tight = 1e-10 * max(1.0, float(np.max(r_th)))
        for tol in (min(tight, rate_tol), rate_tol):
            try:
                ts = solve_timeshare(problem, tol=tol)
                return ts.achieved, ts, clusters, merged
            except InfeasibleError:
                pass
        if len(clusters) == 1:
            raise InfeasibleError("targets are outside the time-share hull even with every order allowed")
        # merge the adjacent pair of clusters with the closest prices
        gaps = [theta[list(clusters[k + 1])].min() - theta[list(clusters[k])].max() for k in range(len(clusters) - 1)]
        k = int(np.argmin(gaps))
        clusters = clusters[:k] + [clusters[k] + clusters[k + 1]] + clusters[k + 2:]
        merged += 1


def solve_min_energy(channels: ChannelSet, targets, alpha=None, opts: SolverOptions | None = None) -> MinPmacSolution:
    """Minimum weighted energy meeting per-user rate targets (bits/tone-use)."""
    opts = opts or SolverOptions()
    r_th, alpha = _check_inputs(channels, targets, alpha)
    N, S = channels.num_users, channels.num_subcarriers
    eff = channels.effective_gains()
    active = r_th > 0
    if not active.any():
        alloc = PowerAllocation.zeros(N, S, alpha)
        return MinPmacSolution(
            alloc, np.zeros(N), decode_order_from_duals(np.zeros(N), opts.cluster_tol),
            np.zeros(N), 0.0, r_th, None, {"dual_iterations": 0, "duality_gap": 0.0, "converged": True},
        )
    dead = [int(i) for i in np.flatnonzero(active & ~np.any(eff > 0, axis=1))]
    if dead:
        raise InfeasibleError(f"users {dead} have zero channels on every tone but positive targets")

    theta_d, p_avg, iters, dual_err = _dual_phase(channels, r_th, alpha, opts)
    diag = {"dual_iterations": iters, "dual_rel_error": dual_err}
    hint = [int(u) for u in np.lexsort((np.arange(N), theta_d))]
    # p_uj can only be positive if theta_max * eff_uj / ln2, a bound on its marginal weighted rate,
    # reaches alpha_u; dropping hopeless tones keeps the polish well conditioned
    keep = 4.0 * float(theta_d.max()) * eff / LN2 >= alpha[:, None]
    keep[~keep.any(axis=1)] = True
    best, bound = None, -math.inf
    starts = [p_avg]
    restarts = 0
    while True:
        start = starts.pop(0)
        if opts.polish:
            p, nit, ok = _polish(channels, r_th, alpha, start, opts, keep)
            theta, resid = _recover_duals(channels, p, r_th, alpha, hint)
            extra = dict(polish_iterations=nit, polish_success=ok, stationarity_residual=resid)
        else:
            p, theta, extra = start, theta_d, {}
        objective = float(PowerAllocation(p, alpha).objective)
        # every price vector gives a valid lower bound, so keep the largest
        bound = max(bound, _dual_bound(channels, theta, r_th, alpha, p, opts))
        if best is None or objective < best[2]:
            best = (p, theta, objective, extra)
        gap = (best[2] - bound) / max(abs(best[2]), 1e-300)
        if gap <= opts.rel_gap or not opts.polish or restarts >= 2:
            break
        # SLSQP can stall near a poor warm start: retry from the priced inner optimum, then a flat start
        restarts += 1
        if restarts == 1:
            p_next, _, _, _ = _inner(channels.gains, channels.noise_cov, theta, alpha, None, opts.max_inner, opts.inner_tol)
        else:
            p_next = np.zeros((N, S))
        if not np.any(p_next > 0):
            p_next = np.where((r_th[:, None] > 0) & (eff > 0), best[2] / max(N * S, 1), 0.0)
        starts.append(p_next)
    p, theta, objective, extra = best
    clusters = decode_order_from_duals(theta, opts.cluster_tol)
    achieved, ts, clusters, merged = _achieve(channels, p, clusters, theta, r_th, opts.rate_tol)
    alloc = PowerAllocation(p, alpha)
    diag.update(extra)
    diag.update(polish_restarts=restarts, duality_gap=gap, dual_bound=bound, clusters_merged=merged,
                converged=gap <= opts.rel_gap)
    sol = MinPmacSolution(alloc, theta, clusters, achieved, objective, r_th, ts, diag)
    if gap > opts.rel_gap:
        raise ConvergenceError(f"duality gap {gap:.3g} above {opts.rel_gap:g}", gap, sol)
    return sol


# --- verification ---------------------------------------------------------------


@dataclass
class CheckResult:
    passed: bool
    residual: float


@dataclass
class VerifyReport:
    checks: dict
    needs_timeshare: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]


def verify_solution(channels: ChannelSet, targets, solution: MinPmacSolution, tol: float = 1e-6) -> VerifyReport:
    """Check rate floors, region membership, non-negativity, slackness, SIC achievability."""
    r_th = np.asarray(targets, dtype=float)
    p = solution.alloc.powers
    r = np.asarray(solution.achieved, dtype=float)
    checks = {}
    short = float(np.max(r_th - r)) if len(r) else 0.0
    checks["D1_rate_floor"] = CheckResult(short <= tol, max(short, 0.0))
    neg = float(-np.min(p)) if p.size else 0.0
    checks["D3_nonnegative"] = CheckResult(neg <= 0.0, max(neg, 0.0))
    if neg > 0:
        checks["D2_polymatroid"] = CheckResult(False, math.inf)
    else:
        pm = capacity.check_polymatroid(channels, p, r, tol=1e-9)
        checks["D2_polymatroid"] = CheckResult(pm.feasible, max(pm.violation, 0.0))
    theta = np.asarray(solution.duals, dtype=float)
    scale = max(1.0, float(np.max(np.abs(theta))) if len(theta) else 1.0)
    slack = float(np.max(np.abs(theta * (r_th - r)))) / scale if len(r) else 0.0
    checks["complementary_slackness"] = CheckResult(slack <= tol * max(1.0, float(np.max(r_th, initial=0))), slack)

    from .timeshare import TimeShareProblem, candidate_orders, solve_timeshare

    needs_ts = False
    if neg > 0:
        checks["sic_achievable"] = CheckResult(False, math.inf)
    else:
        orders = candidate_orders(solution.clusters)
        R = np.array([capacity.sic_rates(channels, p, o) for o in orders])
        if len(orders) == 1:
            gap = float(np.max(r - R[0]))
            checks["sic_achievable"] = CheckResult(gap <= tol, max(gap, 0.0))
            needs_ts = gap > tol
        else:
            needs_ts = not any(np.all(Rk >= r - tol) for Rk in R)
            try:
                ts = solve_timeshare(TimeShareProblem(orders, R, r), tol=tol)
                checks["sic_achievable"] = CheckResult(True, float(np.max(r - ts.achieved, initial=0.0)))
            except InfeasibleError:
                checks["sic_achievable"] = CheckResult(False, math.inf)
    return VerifyReport(checks, needs_ts)


# --- fixed-budget mode --------------------------------------------------------------


@dataclass
class BudgetSolution:
    alloc: PowerAllocation
    rates: np.ndarray
    sum_rate: float
    price: float
    diagnostics: dict = field(default_factory=dict)


def max_sum_rate(channels: ChannelSet, budget: float, alpha=None, opts: SolverOptions | None = None) -> BudgetSolution:
    """Largest sum rate with weighted energy ``alpha . E`` at most ``budget``.

    Equal prices for every user turn the per-tone trade-off into sum-capacity
    versus energy; the common price is bisected until the energy matches the
    budget.  All users then share one cluster, so per-user rates are reported
    as the uniform time-share over every decode order.
    """
    opts = opts or SolverOptions()
    N, S = channels.num_users, channels.num_subcarriers
    _, alpha = _check_inputs(channels, np.zeros(N), alpha)
    if budget < 0:
        raise DomainError("budget must be non-negative")
    if budget == 0:
        alloc = PowerAllocation.zeros(N, S, alpha)
        return BudgetSolution(alloc, np.zeros(N), 0.0, 0.0)
    G, Z = channels.gains, channels.noise_cov

    def solve(t, p0):
        p, _, _, _ = _inner(G, Z, np.full(N, t), alpha, p0, opts.max_inner, opts.inner_tol)
        return p

    eff = channels.effective_gains()
    best = float(np.max(eff / alpha[:, None]))
    if not best > 0:
        raise InfeasibleError("all channels are zero")
    # price at which the single best variable starts to get power
    lo = LN2 / best
    hi = lo * 2
    p = solve(hi, None)
    while alpha @ p.sum(axis=1) < budget:
        lo, hi = hi, hi * 2
        p = solve(hi, p)
    p_hi = p
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        pm = solve(mid, p_hi)
        e = alpha @ pm.sum(axis=1)
        if e > budget:
            hi, p_hi = mid, pm
        else:
            lo = mid
        if abs(e - budget) <= 1e-12 * budget:
            p_hi = pm
            break
    p = p_hi * (budget / (alpha @ p_hi.sum(axis=1)))
    alloc = PowerAllocation(p, alpha)
    sum_rate = capacity.subset_capacity(channels, p, range(N))
    if N <= 6:
        rates = np.mean([capacity.sic_rates(channels, p, o) for o in capacity.enumerate_orders(N)], axis=0)
    else:
        rates = capacity.sic_rates(channels, p, tuple(range(N)))
    return BudgetSolution(alloc, rates, sum_rate, hi)


def max_rate_scaling(channels: ChannelSet, direction, budget: float, alpha=None,
                     opts: SolverOptions | None = None, xtol: float = 1e-6) -> float:
    """Largest t such that rates ``t * direction`` cost at most ``budget`` weighted energy.

    The least energy for ``t * r`` is increasing in t, so a root search on
    log energy - log budget finds the boundary.  A policy that spends
    ``budget`` on rates ``r`` reaches ``1 / t`` of what the optimal allocation
    delivers in the same rate direction.
    """
    r = np.asarray(direction, dtype=float)
    if budget <= 0:
        raise DomainError("budget must be positive")
    if not np.any(r > 0):
        raise DomainError("direction must have a positive entry")

    def f(t):
        return math.log(solve_min_energy(channels, t * r, alpha, opts).objective) - math.log(budget)

    hi = 1.0
    while f(hi) < 0:
        hi *= 2
    lo = hi / 2
    while f(lo) > 0:
        lo /= 2
    return float(brentq(f, lo, hi, xtol=xtol * lo))
