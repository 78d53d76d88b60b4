"""Training and evaluation loops for the power-allocation agent."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..channel import ChannelSet
from ..errors import MacallocError
from ..minpmac import max_rate_scaling, max_sum_rate
from .env import EnvConfig, decode_action, env_reset, env_step
from .ppo import PpoConfig, PpoModel, Rollout, greedy_action, ppo_update, sample_action

CURVE_COLUMNS = ("episode", "reward", "rate", "eff", "power", "fair", "sum_rate_mbps", "total_power")


def _episode_seeds(seed: int, n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.integers(0, 2**31, size=n)


def rollout(model: PpoModel, config: EnvConfig, env_seed: int, rng: np.random.Generator, policy="sample",
            channels: ChannelSet | None = None):
    """One episode; returns the trajectory and per-step reward terms."""
    state = env_reset(config, int(env_seed), channels)
    T, H = config.horizon, config.num_heads
    obs = np.empty((T, config.obs_dim))
    acts = np.empty((T, H), dtype=int)
    logp = np.zeros(T)
    vals = np.zeros(T)
    terms = np.empty((T, 5))
    extra = np.empty((T, 2))
    for t in range(T):
        o = state.observation()
        obs[t] = o
        if policy == "sample":
            a, logp[t], vals[t] = sample_action(model, o, rng)
        elif policy == "greedy":
            a = greedy_action(model, o)
        else:  # uniform random levels
            a = rng.integers(0, config.levels, H)
        acts[t] = a
        state, rw = env_step(state, a)
        terms[t] = rw.as_array()
        extra[t] = state.rates.sum(), state.total_power
    return Rollout(obs, acts, logp, vals, terms[:, 0].copy()), terms, extra, state


@dataclass
class TrainResult:
    model: PpoModel
    curve: np.ndarray  # rows follow CURVE_COLUMNS
    diagnostics: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def rewards(self) -> np.ndarray:
        return self.curve[:, 1]


def train(env_config: EnvConfig, ppo_config: PpoConfig | None = None, episodes: int = 200, seed: int = 0,
          log_every: int = 0) -> TrainResult:
    """Collect one episode, update, repeat.  Deterministic for a fixed seed."""
    ppo_config = ppo_config or PpoConfig(seed=seed)
    model = PpoModel.create(env_config.obs_dim, env_config.num_heads, env_config.levels, ppo_config)
    rng = np.random.Generator(np.random.PCG64([seed, 1]))
    upd_rng = np.random.Generator(np.random.PCG64([seed, 2]))
    curve = np.empty((episodes, len(CURVE_COLUMNS)))
    diags = []
    t0 = time.perf_counter()
    for ep, env_seed in enumerate(_episode_seeds(seed, episodes)):
        traj, terms, extra, _ = rollout(model, env_config, env_seed, rng)
        curve[ep] = [ep, *terms.mean(axis=0), *extra.mean(axis=0)]
        diags.append(ppo_update(model, traj, upd_rng))
        if log_every and (ep + 1) % log_every == 0:
            print(f"episode {ep + 1}: reward {curve[max(0, ep - log_every + 1):ep + 1, 1].mean():.4f}")
    return TrainResult(model, curve, diags, time.perf_counter() - t0)


def random_policy_reward(env_config: EnvConfig, episodes: int = 20, seed: int = 0) -> float:
    """Mean step reward of uniformly random power levels."""
    rng = np.random.Generator(np.random.PCG64([seed, 3]))
    out = []
    for env_seed in _episode_seeds(seed + 7919, episodes):
        _, terms, _, _ = rollout(None, env_config, env_seed, rng, policy="random")
        out.append(terms[:, 0].mean())
    return float(np.mean(out))


def greedy_allocation(model: PpoModel, config: EnvConfig, channels: ChannelSet, steps: int | None = None):
    """Run the greedy policy on fixed channels; return the final state and step terms."""
    cfg = config if steps is None else _with_horizon(config, steps)
    _, terms, extra, state = rollout(model, cfg, 0, None, policy="greedy", channels=channels)
    return state, terms, extra


def _with_horizon(config, steps):
    from dataclasses import replace

    return replace(config, horizon=int(steps))


def decision_time(model: PpoModel, config: EnvConfig, obs, repeats: int = 20) -> float:
    """Median wall-clock of one greedy decision (forward pass, argmax, decode)."""
    greedy_action(model, obs)  # warm-up
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        decode_action(config, greedy_action(model, obs))
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def _optimum_ratios(ch: ChannelSet, state, mean_rate: float, mean_energy: float) -> dict:
    out = {"optimum_mbps": 0.0, "sum_rate_ratio": 0.0, "ratio": 0.0}
    if mean_energy > 0:
        opt = max_sum_rate(ch, mean_energy).sum_rate * ch.mbps_per_bit()
        out["optimum_mbps"] = opt
        out["sum_rate_ratio"] = mean_rate / opt if opt > 0 else 0.0
    bits = state.rates / ch.mbps_per_bit()
    energy = float(state.powers.sum())
    if energy > 0 and np.any(bits > 0):
        try:
            out["ratio"] = 1.0 / max_rate_scaling(ch, bits, energy)
        except MacallocError:
            out["ratio"] = float("nan")
    return out


def evaluate(model: PpoModel, config: EnvConfig, channel_sets, steps: int | None = None,
             optimum: bool = True) -> dict:
    """Greedy metrics on each channel set, with two ratios to the optimum at equal energy.

    ``ratio`` compares the agent's final allocation with the least-energy
    allocation in the same rate direction: the optimum scales the agent's
    per-user rates by the largest factor its energy allows, and the ratio is
    the inverse of that factor.  ``sum_rate_ratio`` compares the agent's mean
    sum rate with the largest sum rate at its mean energy, with no constraint
    on how the rate is split among users.
    """
    if model.obs_dim != config.obs_dim:
        from ..errors import ShapeError

        raise ShapeError(f"checkpoint expects {model.obs_dim} observations, config gives {config.obs_dim}")
    rows = []
    for ch in channel_sets:
        state, terms, extra = greedy_allocation(model, config, ch, steps)
        sum_rate = float(extra[:, 0].mean())
        energy = float(extra[:, 1].mean())
        row = {
            "sum_rate_mbps": sum_rate,
            "per_user_mbps": state.rates.tolist(),
            "min_user_mbps": float(state.rates.min()),
            "mean_power": energy,
            "reward": float(terms[:, 0].mean()),
            "decision_seconds": decision_time(model, config, state.observation()),
        }
        if optimum:
            row.update(_optimum_ratios(ch, state, sum_rate, energy))
        rows.append(row)
    agg = {
        "episodes": len(rows),
        "mean_sum_rate_mbps": float(np.mean([r["sum_rate_mbps"] for r in rows])) if rows else 0.0,
        "mean_per_user_mbps": np.mean([r["per_user_mbps"] for r in rows], axis=0).tolist() if rows else [],
        "mean_power": float(np.mean([r["mean_power"] for r in rows])) if rows else 0.0,
        "mean_reward": float(np.mean([r["reward"] for r in rows])) if rows else 0.0,
        "decision_seconds": float(np.median([r["decision_seconds"] for r in rows])) if rows else 0.0,
    }
    if optimum and rows:
        agg["mean_optimum_mbps"] = float(np.mean([r["optimum_mbps"] for r in rows]))
        agg["optimality_ratio"] = float(np.mean([r["ratio"] for r in rows]))
        agg["sum_rate_ratio"] = float(np.mean([r["sum_rate_ratio"] for r in rows]))
    agg["per_episode"] = rows
    return agg
