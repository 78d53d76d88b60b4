"""Power-allocation MDP: the agent picks a quantized power per (user, tone).

Each step decodes the action into powers, picks the SIC order that best
protects the weakest user, and scores the resulting rates.  Channels are
fixed within an episode and redrawn on reset unless a fixed channel set is
supplied.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import capacity
from ..channel import ChannelSet, Scenario, generate_channels
from ..errors import ConfigError, ShapeError, SizeError


@dataclass(frozen=True)
class EnvConfig:
    num_users: int = 3
    num_subcarriers: int = 4
    rx_antennas: int = 1
    user_distances: tuple = (3.0, 3.0, 3.0)
    bandwidth_hz: float = 80e6
    carrier_hz: float = 2.49e9
    # each episode draws its receive SNR from this list
    snr_db: tuple = (20.0,)
    r_min_mbps: float = 100.0
    p_total: float = 6.0  # W, reference for the over-budget penalty
    p_max: float = 12.0  # W, hard limit on the total; larger totals are scaled down
    p_user: float = 4.0  # W, per-user cap P_t
    horizon: int = 200  # steps per episode
    levels: int = 8  # quantized power levels per (user, tone)
    level_span_db: float = 30.0  # ratio of the largest to the smallest non-zero level
    weights: tuple = (1.0, 1.0, 1.0, 1.0)
    eps_denom: float = 1e-9
    k_viol: float = 0.0  # optional per-violation penalty, off by default
    channels: ChannelSet | None = field(default=None, compare=False)  # fixed-channel mode
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "user_distances", tuple(float(d) for d in self.user_distances))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in np.atleast_1d(self.snr_db)))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.num_users < 1 or self.num_subcarriers < 1 or self.rx_antennas < 1:
            raise ConfigError("users, tones and antennas must be >= 1")
        if self.num_users > capacity.MAX_ENUM_USERS:
            raise SizeError(f"dynamic ordering enumerates N! orders; N must be <= {capacity.MAX_ENUM_USERS}")
        if len(self.user_distances) != self.num_users:
            raise ConfigError(f"need {self.num_users} user distances")
        if min(self.p_total, self.p_max, self.p_user, self.r_min_mbps) <= 0:
            raise ConfigError("power caps and the rate floor must be positive")
        if self.levels < 1:
            raise ConfigError("need at least one power level")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if len(self.weights) != 4:
            raise ConfigError("reward takes four weights")
        if not self.snr_db:
            raise ConfigError("need at least one SNR value")
        if self.eps_denom <= 0:
            raise ConfigError("eps_denom must be positive")
        if self.channels is not None:
            g = self.channels.gains
            if g.shape != (self.num_users, self.num_subcarriers, self.rx_antennas):
                raise ShapeError(f"fixed channels {g.shape} do not match the config")

    @property
    def obs_dim(self) -> int:
        """Rates, total power and every (user, tone) power."""
        N, S = self.num_users, self.num_subcarriers
        return N + 1 + N * S

    @property
    def num_heads(self) -> int:
        return self.num_users * self.num_subcarriers

    @property
    def head_max(self) -> float:
        """Largest per-tone power; S of them stay within the per-user cap."""
        return self.p_user / self.num_subcarriers

    def power_levels(self) -> np.ndarray:
        """Level 0 is silence; the rest are log-spaced up to ``head_max``."""
        if self.levels == 1:
            return np.zeros(1)
        k = self.levels - 1
        if k == 1:
            return np.array([0.0, self.head_max])
        ratio = 10 ** (-self.level_span_db / 10)
        return np.concatenate([[0.0], self.head_max * np.geomspace(ratio, 1.0, k)])


@dataclass
class EnvState:
    config: EnvConfig
    channels: ChannelSet
    rates: np.ndarray  # (N,) Mbps
    powers: np.ndarray  # (N, S) W
    t: int = 0
    order: tuple = ()

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())

    @property
    def done(self) -> bool:
        return self.t >= self.config.horizon

    def observation(self) -> np.ndarray:
        c = self.config
        return np.concatenate([
            self.rates / c.r_min_mbps,
            [self.total_power / c.p_total],
            (self.powers / c.head_max).ravel(),
        ])


@dataclass(frozen=True)
class RewardBreakdown:
    rate: float
    eff: float
    power: float
    fair: float
    violation: float = 0.0  # only non-zero when the k_viol hook is on

    @property
    def total(self) -> float:
        return self.rate + self.eff - self.power + self.fair - self.violation

    def as_array(self) -> np.ndarray:
        return np.array([self.total, self.rate, self.eff, self.power, self.fair])


def reward(rates_mbps, powers, config: EnvConfig) -> RewardBreakdown:
    """Rate, efficiency, over-budget and fairness terms of the step reward."""
    R = np.asarray(rates_mbps, dtype=float)
    P = float(np.sum(powers))
    w1, w2, w3, w4 = config.weights
    eps = config.eps_denom
    total_r = float(R.sum())
    r_rate = w1 * math.tanh(total_r / config.r_min_mbps - 1.0)
    # bits/s per watt scaled by 1e-6 is Mbps per watt
    r_eff = w2 * math.tanh(total_r / (P + eps))
    # P/P_total - 0.8 written so that both 80% and 100% of the budget come out exact
    p_pow = 0.0 if P <= 0.8 * config.p_total else w3 * ((P - config.p_total) / config.p_total + 0.2)
    mean = total_r / len(R)
    r_fair = w4 * (1.0 - float(np.abs(R - mean).sum()) / (mean * len(R) + eps))
    viol = config.k_viol * float(np.mean(R < config.r_min_mbps)) if config.k_viol else 0.0
    return RewardBreakdown(r_rate, r_eff, p_pow, r_fair, viol)


# --- decode orders ------------------------------------------------------------


_ORDER_CACHE: dict = {}


def _orders(n):
    if n not in _ORDER_CACHE:
        _ORDER_CACHE[n] = np.array(list(itertools.permutations(range(n))), dtype=int).reshape(-1, n)
    return _ORDER_CACHE[n]


def all_order_rates(channels: ChannelSet, powers) -> np.ndarray:
    """Per-user SIC rates (bits/tone-use) under every decode order, shape (N!, N)."""
    N = channels.num_users
    orders = _orders(N)
    p = np.asarray(powers, dtype=float)
    if channels.rx_antennas == 1 and channels.white_noise:
        x = p * channels.effective_gains()  # received SNR per (user, tone)
        xo = x[orders]  # (K, N, S) in decode position
        tail = np.cumsum(xo[:, ::-1], axis=1)[:, ::-1]  # users at positions >= k
        interf = np.concatenate([tail[:, 1:], np.zeros_like(tail[:, :1])], axis=1)
        per_pos = np.log2(1.0 + xo / (1.0 + interf)).sum(axis=2)
        out = np.empty_like(per_pos)
        np.put_along_axis(out, orders, per_pos, axis=1)
        return out
    return np.array([capacity.sic_rates(channels, p, tuple(o)) for o in orders])


def dynamic_order(channels: ChannelSet, powers, r_min) -> tuple:
    """Decode order maximizing ``min_i R_i / R_min``; ties go to the lexicographically first."""
    N = channels.num_users
    if N > capacity.MAX_ENUM_USERS:
        raise SizeError(f"N={N} is too large to enumerate decode orders")
    k = _best_order(all_order_rates(channels, powers), r_min)
    return tuple(int(u) for u in _orders(N)[k])


def _best_order(R, r_min) -> int:
    score = np.min(R / np.broadcast_to(np.asarray(r_min, dtype=float), R.shape[1:]), axis=1)
    top = score.max()
    return int(np.flatnonzero(score >= top - 1e-12 * max(abs(top), 1e-300))[0])


# --- episode --------------------------------------------------------------------


def episode_channels(config: EnvConfig, seed: int) -> ChannelSet:
    """Channel draw for one episode; the SNR is picked from the config list."""
    if config.channels is not None:
        return config.channels
    rng = np.random.Generator(np.random.PCG64(seed))
    snr = config.snr_db[int(rng.integers(len(config.snr_db)))]
    scenario = Scenario(
        config.num_users, config.num_subcarriers, config.rx_antennas, 1,
        config.bandwidth_hz, config.carrier_hz, config.user_distances,
        target_receive_snr_db=snr, seed=int(rng.integers(2**31)),
    )
    return generate_channels(scenario)


def env_reset(config: EnvConfig, seed: int, channels: ChannelSet | None = None) -> EnvState:
    """Zero powers and zero rates on a fresh (or given) channel draw."""
    ch = channels if channels is not None else episode_channels(config, seed)
    N, S = config.num_users, config.num_subcarriers
    return EnvState(config, ch, np.zeros(N), np.zeros((N, S)), 0, tuple(range(N)))


def decode_action(config: EnvConfig, action) -> np.ndarray:
    """Level indices (one per user-tone, row-major) to powers (N, S)."""
    a = np.asarray(action)
    N, S = config.num_users, config.num_subcarriers
    if a.size != N * S:
        raise ShapeError(f"action needs {N * S} level indices, got {a.size}")
    if not np.issubdtype(a.dtype, np.integer) or np.any((a < 0) | (a >= config.levels)):
        raise ConfigError(f"action indices must be integers in [0, {config.levels})")
    p = config.power_levels()[a.reshape(N, S)]
    total = p.sum()
    if total > config.p_max:
        p = p * (config.p_max / total)
    return p


def env_step(state: EnvState, action) -> tuple[EnvState, RewardBreakdown]:
    c = state.config
    p = decode_action(c, action)
    R = all_order_rates(state.channels, p)
    k = _best_order(R, c.r_min_mbps)
    order = tuple(int(u) for u in _orders(c.num_users)[k])
    rates = R[k] * state.channels.mbps_per_bit()
    nxt = replace(state, rates=rates, powers=p, t=state.t + 1, order=order)
    return nxt, reward(rates, p, c)
