"""Rate computations over the MAC capacity region.

Rates are in bits per tone-use; a user's rate is the sum over tones.  Decode
orders are tuples of 0-based user indices, first-decoded first, applied to
every tone.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .errors import ConstraintError, DomainError, ShapeError, SizeError

LN2 = math.log(2.0)
MAX_ENUM_USERS = 8

DecodeOrder = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Per-user per-tone transmit powers ``p[i, j]`` (W) with weights ``alpha``."""

    powers: np.ndarray
    alpha: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.powers, dtype=float)
        if p.ndim != 2:
            raise ShapeError(f"powers must be (N, S), got shape {p.shape}")
        a = np.ones(p.shape[0]) if self.alpha is None else np.array(self.alpha, dtype=float)
        if a.shape != (p.shape[0],):
            raise ShapeError(f"alpha must have length {p.shape[0]}")
        object.__setattr__(self, "powers", p)
        object.__setattr__(self, "alpha", a)

    @classmethod
    def zeros(cls, num_users: int, num_subcarriers: int, alpha=None) -> "PowerAllocation":
        return cls(np.zeros((num_users, num_subcarriers)), alpha)

    @property
    def per_user_energy(self) -> np.ndarray:
        return self.powers.sum(axis=1)

    @property
    def total_energy(self) -> float:
        return float(self.powers.sum())

    @property
    def objective(self) -> float:
        """Weighted energy ``sum_i alpha_i E_i``."""
        return float(self.alpha @ self.per_user_energy)

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.powers >= 0))


def _powers(channels: ChannelSet, alloc) -> np.ndarray:
    p = alloc.powers if isinstance(alloc, PowerAllocation) else np.asarray(alloc, dtype=float)
    if p.shape != channels.gains.shape[:2]:
        raise ShapeError(f"powers shape {p.shape} does not match channels {channels.gains.shape[:2]}")
    if np.any(p < 0):
        raise DomainError("powers must be non-negative")
    return p


def validate_order(order, num_users: int) -> DecodeOrder:
    order = tuple(int(u) for u in order)
    if sorted(order) != list(range(num_users)):
        raise DomainError(f"{order} is not a permutation of 0..{num_users - 1}")
    return order


def logdet2(mats: np.ndarray) -> np.ndarray:
    """log2 det of a batch of Hermitian positive-definite matrices (Cholesky)."""
    if mats.shape[-1] == 1:
        return np.log2(np.real(mats[..., 0, 0]))
    chol = np.linalg.cholesky(mats)
    return 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1) / LN2


def _outer(channels: ChannelSet, p: np.ndarray) -> np.ndarray:
    g = channels.gains
    return p[:, :, None, None] * np.einsum("usl,usm->uslm", g, g.conj())


def chain_logdets(channels: ChannelSet, p: np.ndarray, order: DecodeOrder) -> np.ndarray:
    """``log2 det(Z + sum_{m>=k} p g g^H)`` for k = 0..N, shape ``(N + 1, S)``.

    Row k covers the users decoded at positions k..N-1; row N is ``log2 det Z``.
    """
    C = _outer(channels, p)[list(order)]
    tail = np.cumsum(C[::-1], axis=0)[::-1]
    Z = channels.noise_cov
    S = p.shape[1]
    mats = np.concatenate([tail + Z, np.broadcast_to(Z, (1, S) + Z.shape)], axis=0)
    return logdet2(mats)


def sic_rates(channels: ChannelSet, alloc, order, per_tone: bool = False) -> np.ndarray:
    """Rates of a successive-interference-cancellation receiver.

    The user at decode position k sees users at positions > k as noise.  The
    per-user sum over positions telescopes to the full-set log-det.
    """
    p = _powers(channels, alloc)
    order = validate_order(order, channels.num_users)
    ld = chain_logdets(channels, p, order)
    per_pos = np.maximum(ld[:-1] - ld[1:], 0.0)
    r = np.empty_like(per_pos)
    r[list(order)] = per_pos
    return r if per_tone else r.sum(axis=1)


def subset_capacity(channels: ChannelSet, alloc, subset, per_tone: bool = False):
    """``sum_j log2 det((Z + sum_{i in subset} p g g^H) Z^-1)``."""
    subset = sorted(set(int(i) for i in subset))
    if not subset:
        raise DomainError("subset must be non-empty")
    if subset[0] < 0 or subset[-1] >= channels.num_users:
        raise DomainError(f"subset {subset} has users outside 0..{channels.num_users - 1}")
    p = _powers(channels, alloc)
    C = _outer(channels, p)[subset].sum(axis=0)
    Z = channels.noise_cov
    caps = logdet2(C + Z) - logdet2(Z[None])[0]
    caps = np.maximum(caps, 0.0)
    return caps if per_tone else float(caps.sum())


def all_subsets(num_users: int):
    for k in range(1, num_users + 1):
        yield from itertools.combinations(range(num_users), k)


@dataclass(frozen=True)
class PolymatroidCheck:
    feasible: bool
    worst_subset: tuple[int, ...]
    violation: float  # max over subsets of sum(rates) - capacity; <= tol when feasible
    margins: dict = field(default_factory=dict, repr=False)

    def __bool__(self):
        return self.feasible


def check_polymatroid(channels: ChannelSet, alloc, rates, tol: float = 1e-9) -> PolymatroidCheck:
    N = channels.num_users
    if N > 20:
        raise SizeError("polymatroid check enumerates 2^N - 1 subsets; N must be <= 20")
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (N,):
        raise ShapeError(f"rates must have length {N}")
    margins = {}
    worst, worst_v = (), -math.inf
    for sub in all_subsets(N):
        v = float(rates[list(sub)].sum()) - subset_capacity(channels, alloc, sub)
        margins[sub] = v
        if v > worst_v:
            worst, worst_v = sub, v
    return PolymatroidCheck(worst_v <= tol, worst, worst_v, margins)


def heuristic_order(channels: ChannelSet, tone: int) -> DecodeOrder:
    """Strongest channel decoded first; ties go to the lower user index."""
    g2 = np.sum(np.abs(channels.gains[:, tone, :]) ** 2, axis=1)
    return tuple(int(u) for u in np.lexsort((np.arange(len(g2)), -g2)))


def heuristic_sinr_rates(channels: ChannelSet, alloc, per_tone: bool = False) -> np.ndarray:
    """Rates under the channel-gain decoding order of scalar NOMA.

    On every tone users are ranked by descending ``||g||^2``; the user ranked
    k treats every weaker-ranked user as interference.  With several receive
    antennas each user is detected by a matched filter ``g^H y``.
    """
    p = _powers(channels, alloc)
    N, S, _ = channels.gains.shape
    Z = channels.noise_cov
    r = np.zeros((N, S))
    for j in range(S):
        order = heuristic_order(channels, j)
        g = channels.gains[:, j, :]
        for k, u in enumerate(order):
            cov = Z.copy()
            for v in order[k + 1:]:
                cov = cov + p[v, j] * np.outer(g[v], g[v].conj())
            gg = np.real(np.vdot(g[u], g[u]))
            denom = np.real(np.vdot(g[u], cov @ g[u]))
            sinr = p[u, j] * gg * gg / denom if gg > 0 else 0.0
            r[u, j] = math.log2(1.0 + sinr)
    return r if per_tone else r.sum(axis=1)


def round_robin(num_users: int, num_subcarriers: int) -> np.ndarray:
    """Tone j belongs to user ``j mod N``."""
    return np.arange(num_subcarriers) % num_users


def time_shares(num_users: int, num_subcarriers: int) -> np.ndarray:
    """Fraction of each tone owned by each user, shape (N, S).

    Round-robin when there are at least as many tones as users, otherwise
    every tone is split equally in time.
    """
    if num_subcarriers >= num_users:
        share = np.zeros((num_users, num_subcarriers))
        share[round_robin(num_users, num_subcarriers), np.arange(num_subcarriers)] = 1.0
        return share
    return np.full((num_users, num_subcarriers), 1.0 / num_users)


def _as_shares(assignment, N, S) -> np.ndarray:
    a = np.asarray(assignment)
    if a.ndim == 1:
        if a.shape != (S,):
            raise ShapeError(f"assignment must map all {S} tones")
        if np.any((a < 0) | (a >= N)):
            raise DomainError("assignment names a user outside 0..N-1")
        share = np.zeros((N, S))
        share[a.astype(int), np.arange(S)] = 1.0
        return share
    if a.shape != (N, S):
        raise ShapeError(f"time shares must have shape {(N, S)}")
    if np.any(a < 0) or not np.allclose(a.sum(axis=0), 1.0):
        raise DomainError("time shares must be non-negative and sum to 1 on each tone")
    return a.astype(float)


def oma_rates(channels: ChannelSet, alloc, assignment, per_tone: bool = False) -> np.ndarray:
    """Orthogonal access: each tone (or time fraction of it) carries one user.

    ``assignment`` is a tone -> user map of length S, or an (N, S) matrix of
    time shares.  ``p[i, j]`` is the average energy per tone-use, sent at
    power ``p / share`` during the user's fraction of the tone.
    """
    p = _powers(channels, alloc)
    N, S, _ = channels.gains.shape
    share = _as_shares(assignment, N, S)
    if np.any((share == 0) & (p > 0)):
        i, j = np.argwhere((share == 0) & (p > 0))[0]
        raise ConstraintError(f"user {i} has power on tone {j} it does not own")
    eff = channels.effective_gains()
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(share > 0, share * np.log2(1.0 + p * eff / np.where(share > 0, share, 1.0)), 0.0)
    return r if per_tone else r.sum(axis=1)


def enumerate_orders(num_users: int) -> list[DecodeOrder]:
    if num_users < 1:
        raise DomainError("need at least one user")
    if num_users > MAX_ENUM_USERS:
        raise SizeError(f"refusing to enumerate {num_users}! decode orders (limit N={MAX_ENUM_USERS})")
    return list(itertools.permutations(range(num_users)))


def sum_rate_mbps(channels: ChannelSet, rates) -> float:
    return float(np.sum(rates)) * channels.mbps_per_bit()
