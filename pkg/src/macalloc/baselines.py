"""Reference allocators: orthogonal access, channel-gain NOMA and a grid oracle.

Each allocator has a fixed-target form (least energy meeting per-user rates)
and a fixed-budget form (rates reached with a given weighted energy).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import capacity
from .capacity import PowerAllocation
from .channel import ChannelSet
from .errors import DomainError, InfeasibleError, MacallocError, ShapeError, SizeError

MAX_GRID_DIMS = 6
MAX_BATCH = 2_000_000  # grid points held in memory per feasibility sweep


def _targets(channels: ChannelSet, targets, alpha=None):
    N = channels.num_users
    r = np.asarray(targets, dtype=float).reshape(-1)
    if r.shape != (N,):
        raise ShapeError(f"need {N} rate targets, got {r.size}")
    if np.any(~np.isfinite(r)) or np.any(r < 0):
        raise DomainError("rate targets must be finite and non-negative")
    a = np.ones(N) if alpha is None else np.asarray(alpha, dtype=float)
    if a.shape != (N,) or np.any(a <= 0):
        raise DomainError("alpha must be N positive weights")
    return r, a


# --- brute-force grid oracle ----------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    levels: int = 300
    p_max: float = 1.0

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise DomainError("a grid needs at least 2 levels per dimension")
        if not (self.p_max > 0 and math.isfinite(self.p_max)):
            raise DomainError("p_max must be positive and finite")

    @property
    def step(self) -> float:
        return self.p_max / (self.levels - 1)

    def values(self) -> np.ndarray:
        return np.linspace(0.0, self.p_max, int(self.levels))


@dataclass
class BruteForceResult:
    alloc: PowerAllocation
    objective: float
    level_index: tuple  # grid level per searched (user, tone) dimension
    dims: list  # the (user, tone) pairs searched
    evaluated: int
    info: dict = field(default_factory=dict)


def _subset_caps(G, Z, P, subsets):
    """Subset capacities for a batch of power matrices ``P`` (B, N, S) -> (B, n_subsets)."""
    B = P.shape[0]
    L = Z.shape[0]
    out = np.empty((B, len(subsets)))
    if L == 1:
        eff = (np.abs(G[:, :, 0]) ** 2) / np.real(Z[0, 0])
        for k, W in enumerate(subsets):
            out[:, k] = np.log2(1.0 + np.einsum("bus,us->bs", P[:, list(W)], eff[list(W)])).sum(axis=1)
        return out
    ldz = capacity.logdet2(Z[None])[0]
    outer = np.einsum("usl,usm->uslm", G, G.conj())
    for k, W in enumerate(subsets):
        A = np.einsum("bus,uslm->bslm", P[:, list(W)], outer[list(W)]) + Z
        out[:, k] = (capacity.logdet2(A) - ldz).sum(axis=1)
    return out


def _feasible(G, Z, P, subsets, req):
    return np.all(_subset_caps(G, Z, P, subsets) >= req - 1e-12 * np.maximum(req, 1.0), axis=1)


def feasible_grid_bound(channels: ChannelSet, targets, alpha=None) -> float:
    """An upper bound on every coordinate of the least-energy allocation.

    The least weighted energy never exceeds that of a feasible heuristic
    point, so no single power can exceed it divided by the smallest weight.
    """
    r, a = _targets(channels, targets, alpha)
    cands = []
    for fn in (noma_heuristic_allocate, oma_allocate):
        try:
            cands.append(fn(channels, r, a).alloc.objective)
        except MacallocError:
            pass
    if not cands:
        raise InfeasibleError("no heuristic point meets the targets; cannot bound the grid")
    e = min(cands)
    return e / float(a.min()) if e > 0 else 1.0


def brute_force_min_energy(channels: ChannelSet, targets, grid: GridSpec | None = None, alpha=None) -> BruteForceResult:
    """Least weighted energy over a uniform power grid meeting the rate targets.

    Feasibility of a grid point is membership of the targets in the capacity
    region of its powers (every subset sum bounded by the subset log-det),
    which covers all decode orders and their time-shares.  The region only
    grows with power, so for each setting of all but the last two dimensions
    the least-energy frontier is traced by a staircase walk over the last two.
    """
    r, a = _targets(channels, targets, alpha)
    N, S = channels.num_users, channels.num_subcarriers
    if N * S > MAX_GRID_DIMS:
        raise SizeError(f"brute force supports N*S <= {MAX_GRID_DIMS}, got {N * S}")
    if grid is None:
        grid = GridSpec(300, feasible_grid_bound(channels, r, a))
    eff = channels.effective_gains()
    users = [u for u in range(N) if r[u] > 0]
    if any(not np.any(eff[u] > 0) for u in users):
        raise InfeasibleError("a user with a positive target has no usable tone")
    dims = [(u, j) for u in users for j in range(S) if eff[u, j] > 0]
    if not dims:
        alloc = PowerAllocation.zeros(N, S, a)
        return BruteForceResult(alloc, 0.0, (), [], 0)

    n_lv = int(grid.levels)
    vals = grid.values()
    d = len(dims)
    subsets = [W for k in range(1, len(users) + 1) for W in itertools.combinations(users, k)]
    req = np.array([r[list(W)].sum() for W in subsets])
    G, Z = channels.gains, channels.noise_cov
    cost = np.array([a[u] for u, _ in dims])

    if d == 1:
        P = np.zeros((n_lv, N, S))
        u, j = dims[0]
        P[:, u, j] = vals
        ok = _feasible(G, Z, P, subsets, req)
        if not ok.any():
            raise InfeasibleError(f"no grid point up to p_max={grid.p_max:g} meets the targets")
        k = int(np.argmax(ok))
        return _result(N, S, a, dims, (k,), vals, n_lv)

    prefix_dims = d - 2
    batch = n_lv ** prefix_dims
    if batch > MAX_BATCH:
        raise SizeError(
            f"{n_lv}-level grid over {d} dimensions needs {batch} frontier walks (limit {MAX_BATCH}); use fewer levels"
        )
    step = grid.step
    bound = _seed_bound(channels, r, a, dims, grid, subsets, req)
    slack = 1e-12 * max(bound, 1.0) if math.isfinite(bound) else 0.0
    prefix = np.array(list(itertools.product(range(n_lv), repeat=prefix_dims)), dtype=int).reshape(batch, prefix_dims)
    prefix_cost = prefix.astype(float) @ cost[:prefix_dims] * step if prefix_dims else np.zeros(batch)
    keep = prefix_cost <= bound + slack  # nothing under a costlier prefix can win
    prefix, prefix_cost = prefix[keep], prefix_cost[keep]
    batch = len(prefix)
    base = np.zeros((batch, N, S))
    for k, (u, j) in enumerate(dims[:prefix_dims]):
        base[:, u, j] = vals[prefix[:, k]]
    ca, cb = cost[-2] * step, cost[-1] * step
    # staircase walk: raise the second-to-last level when infeasible, lower the last when feasible
    ia = np.zeros(batch, dtype=int)
    if math.isfinite(bound):
        ib = np.minimum(np.floor((bound + slack - prefix_cost) / cb), n_lv - 1).astype(int)
    else:
        ib = np.full(batch, n_lv - 1)
    best = np.full(batch, np.inf)
    best_ab = np.zeros((batch, 2), dtype=int)
    alive = ib >= 0
    (ua, ja), (ub, jb) = dims[-2], dims[-1]
    evaluated = 0
    while alive.any():
        idx = np.flatnonzero(alive)
        P = base[idx].copy()
        P[:, ua, ja] = vals[ia[idx]]
        P[:, ub, jb] = vals[ib[idx]]
        ok = _feasible(G, Z, P, subsets, req)
        evaluated += idx.size
        e = prefix_cost[idx] + ca * ia[idx] + cb * ib[idx]
        better = ok & (e < best[idx])
        best[idx[better]] = e[better]
        best_ab[idx[better]] = np.stack([ia[idx[better]], ib[idx[better]]], axis=1)
        if better.any():
            bound = min(bound, float(e[better].min()))
            slack = 1e-12 * max(bound, 1.0)
        # feasible: try a lower last level (done once it reaches 0); infeasible: raise the other one
        ib[idx[ok]] -= 1
        ia[idx[~ok]] += 1
        alive[idx] = (ib[idx] >= 0) & (ia[idx] < n_lv) & (prefix_cost[idx] + ca * ia[idx] <= bound + slack)
    if not np.isfinite(best).any():
        raise InfeasibleError(f"no grid point up to p_max={grid.p_max:g} meets the targets")
    win = int(np.argmin(best))  # first minimum: lowest linear index among prefixes
    level = tuple(int(x) for x in prefix[win]) + tuple(int(x) for x in best_ab[win])
    res = _result(N, S, a, dims, level, vals, n_lv)
    res.evaluated = evaluated
    return res


def _seed_bound(channels, r, a, dims, grid, subsets, req):
    """Energy of a heuristic allocation rounded up onto the grid, or inf.

    Orthogonal and channel-gain NOMA rates both lie inside the capacity
    region of their powers, and the region grows with power, so the rounded
    point is grid-feasible whenever it fits under ``p_max``.
    """
    bound = math.inf
    for fn in (noma_heuristic_allocate, oma_allocate):
        try:
            p = fn(channels, r, a).alloc.powers
        except MacallocError:
            continue
        lv = np.array([math.ceil(p[u, j] / grid.step - 1e-9) for u, j in dims])
        if np.any(lv > grid.levels - 1):
            continue
        q = np.zeros_like(p)
        for (u, j), k in zip(dims, lv):
            q[u, j] = k * grid.step
        if _feasible(channels.gains, channels.noise_cov, q[None], subsets, req)[0]:
            bound = min(bound, float(sum(a[u] * q[u, j] for u, j in dims)))
    return bound


def _result(N, S, a, dims, level, vals, n_lv):
    p = np.zeros((N, S))
    for (u, j), k in zip(dims, level):
        p[u, j] = vals[k]
    alloc = PowerAllocation(p, a)
    return BruteForceResult(alloc, alloc.objective, level, dims, 0, {"levels": n_lv})


def brute_force_max_sum_rate(channels: ChannelSet, budget: float, grid: GridSpec, alpha=None) -> BruteForceResult:
    """Largest sum rate over grid points whose weighted energy fits the budget.

    The sum rate of a power matrix is the full-set capacity; all but the last
    dimension are enumerated and the last takes the largest level that fits.
    """
    N, S = channels.num_users, channels.num_subcarriers
    _, a = _targets(channels, np.zeros(N), alpha)
    if N * S > MAX_GRID_DIMS:
        raise SizeError(f"brute force supports N*S <= {MAX_GRID_DIMS}, got {N * S}")
    if budget < 0:
        raise DomainError("budget must be non-negative")
    eff = channels.effective_gains()
    dims = [(u, j) for u in range(N) for j in range(S) if eff[u, j] > 0]
    if not dims or budget == 0:
        res = _result(N, S, a, [], (), grid.values(), grid.levels)
        res.info["sum_rate"] = 0.0
        return res
    n_lv = int(grid.levels)
    vals = grid.values()
    cost = np.array([a[u] for u, _ in dims])
    head = len(dims) - 1
    if n_lv ** head > MAX_BATCH:
        raise SizeError(f"{n_lv}-level grid over {len(dims)} dimensions is too large; use fewer levels")
    prefix = np.array(list(itertools.product(range(n_lv), repeat=head)), dtype=int).reshape(-1, head)
    spent = prefix @ cost[:head] * grid.step if head else np.zeros(1)
    room = (budget - spent) / (cost[-1] * grid.step)
    last = np.minimum(np.floor(room + 1e-9), n_lv - 1).astype(int)
    ok = last >= 0
    prefix, last = prefix[ok], last[ok]
    P = np.zeros((len(last), N, S))
    for k, (u, j) in enumerate(dims[:head]):
        P[:, u, j] = vals[prefix[:, k]]
    u, j = dims[-1]
    P[:, u, j] = vals[last]
    caps = _subset_caps(channels.gains, channels.noise_cov, P, [tuple(range(N))])[:, 0]
    win = int(np.argmax(caps))
    level = tuple(int(x) for x in prefix[win]) + (int(last[win]),)
    res = _result(N, S, a, dims, level, vals, n_lv)
    res.evaluated = len(last)
    res.info["sum_rate"] = float(caps[win])
    return res


# --- orthogonal access ------------------------------------------------------------


@dataclass
class OmaResult:
    alloc: PowerAllocation
    shares: np.ndarray  # (N, S) time fraction of each tone owned by each user
    rates: np.ndarray

    @property
    def assignment(self) -> np.ndarray:
        """Tone -> user map when every tone has a single owner."""
        return np.argmax(self.shares, axis=0)


def _oma_rate(level, share, eff):
    return float(np.sum(share * np.log2(1.0 + level * eff / share)))


def oma_allocate(channels: ChannelSet, targets, alpha=None, power_cap: float | None = None) -> OmaResult:
    """Round-robin tones; each user spreads equal power over its own tones.

    With fewer tones than users every tone is split equally in time.  The
    per-tone power level of each user is bisected to meet its target.
    """
    r, a = _targets(channels, targets, alpha)
    N, S = channels.num_users, channels.num_subcarriers
    share = capacity.time_shares(N, S)
    eff = channels.effective_gains()
    p = np.zeros((N, S))
    for u in range(N):
        if r[u] == 0:
            continue
        own = np.flatnonzero((share[u] > 0) & (eff[u] > 0))
        if own.size == 0:
            raise InfeasibleError(f"user {u} owns no tone with a usable channel")
        sh, ef = share[u, own], eff[u, own]
        lo, hi = 0.0, 1.0
        while _oma_rate(hi, sh, ef) < r[u]:
            lo, hi = hi, hi * 2.0
            if hi > 1e300:
                raise InfeasibleError(f"user {u} cannot reach its target")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
            if _oma_rate(mid, sh, ef) >= r[u]:
                hi = mid
            else:
                lo = mid
        p[u, own] = hi
    if power_cap is not None and np.any(p.sum(axis=1) > power_cap * (1 + 1e-12)):
        u = int(np.argmax(p.sum(axis=1)))
        raise InfeasibleError(f"user {u} needs energy {p[u].sum():.4g} above the cap {power_cap:.4g}")
    alloc = PowerAllocation(p, a)
    return OmaResult(alloc, share, capacity.oma_rates(channels, alloc, share))


def oma_fixed_budget(channels: ChannelSet, budget: float, alpha=None) -> OmaResult:
    """Equal weighted-energy split across users, spread evenly on owned tones."""
    N, S = channels.num_users, channels.num_subcarriers
    _, a = _targets(channels, np.zeros(N), alpha)
    if budget < 0:
        raise DomainError("budget must be non-negative")
    share = capacity.time_shares(N, S)
    own = share > 0
    e_user = budget / a.sum()
    p = np.where(own, e_user / own.sum(axis=1, keepdims=True), 0.0)
    alloc = PowerAllocation(p, a)
    return OmaResult(alloc, share, capacity.oma_rates(channels, alloc, share))


# --- heuristic channel-gain NOMA ------------------------------------------------------


@dataclass
class NomaResult:
    alloc: PowerAllocation
    orders: list  # per-tone decode order, strongest first
    rates: np.ndarray


def noma_heuristic_allocate(channels: ChannelSet, targets, alpha=None) -> NomaResult:
    """Fixed channel-gain order on every tone; powers by back-substitution.

    Each user's target is split evenly over the tones where its channel is
    non-zero.  On a tone the last-decoded (weakest) user sees only noise, so
    its power follows from inverting its SINR; every earlier user then sees
    the already-fixed powers of the users decoded after it.
    """
    r, a = _targets(channels, targets, alpha)
    N, S = channels.num_users, channels.num_subcarriers
    G, Z = channels.gains, channels.noise_cov
    g2 = np.sum(np.abs(G) ** 2, axis=2)
    live = g2 > 0
    for u in range(N):
        if r[u] > 0 and not live[u].any():
            raise InfeasibleError(f"user {u} has zero channels on every tone but a positive target")
    per_tone = np.where(live, r[:, None] / np.maximum(live.sum(axis=1, keepdims=True), 1), 0.0)
    p = np.zeros((N, S))
    orders = []
    for j in range(S):
        order = capacity.heuristic_order(channels, j)
        orders.append(order)
        cov = Z.copy()
        for u in reversed(order):
            if per_tone[u, j] == 0:
                continue
            g = G[u, j]
            gg = g2[u, j]
            need = (2.0 ** per_tone[u, j] - 1.0) * np.real(np.vdot(g, cov @ g)) / gg**2
            if need < 0:
                raise MacallocError(f"negative power {need} for user {u} on tone {j}")
            p[u, j] = need
            cov = cov + need * np.outer(g, g.conj())
    alloc = PowerAllocation(p, a)
    return NomaResult(alloc, orders, capacity.heuristic_sinr_rates(channels, alloc))


def noma_fixed_budget(channels: ChannelSet, budget: float, alpha=None) -> NomaResult:
    """Equal weighted-energy split across users and tones, channel-gain order."""
    N, S = channels.num_users, channels.num_subcarriers
    _, a = _targets(channels, np.zeros(N), alpha)
    if budget < 0:
        raise DomainError("budget must be non-negative")
    p = np.full((N, S), budget / a.sum() / S)
    alloc = PowerAllocation(p, a)
    orders = [capacity.heuristic_order(channels, j) for j in range(S)]
    return NomaResult(alloc, orders, capacity.heuristic_sinr_rates(channels, alloc))
