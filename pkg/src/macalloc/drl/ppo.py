"""Actor-critic with factored categorical heads trained by clipped PPO."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError, TrainingError
from .nets import MLP, Adam, clip_by_norm


@dataclass(frozen=True)
class PpoConfig:
    lr: float = 5e-4
    clip: float = 0.2
    gamma: float = 0.98
    epochs: int = 100
    batch_size: int = 128
    # rollout horizon for the n-step advantage; the step reward depends only on
    # the current action, so short horizons keep the advantage variance low
    nstep: int = 8
    hidden: int = 64
    entropy_coef: float = 0.0
    grad_clip: float = 0.5
    normalize_advantages: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ConfigError("clip must lie in (0, 1)")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.epochs < 1 or self.batch_size < 1 or self.nstep < 1 or self.hidden < 1:
            raise ConfigError("epochs, batch size, nstep and hidden width must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


@dataclass
class PpoModel:
    actor: MLP
    critic: MLP
    num_heads: int
    levels: int
    config: PpoConfig = field(default_factory=PpoConfig)
    actor_opt: Adam = None
    critic_opt: Adam = None

    def __post_init__(self):
        if self.actor_opt is None:
            self.actor_opt = Adam(lr=self.config.lr)
        if self.critic_opt is None:
            self.critic_opt = Adam(lr=self.config.lr)

    @classmethod
    def create(cls, obs_dim: int, num_heads: int, levels: int, config: PpoConfig | None = None, zero: bool = False):
        config = config or PpoConfig()
        rng = None if zero else np.random.Generator(np.random.PCG64(config.seed))
        h = config.hidden
        actor = MLP([obs_dim, h, h, num_heads * levels], rng, out_scale=0.01)
        critic = MLP([obs_dim, h, h, 1], rng, out_scale=1.0)
        return cls(actor, critic, num_heads, levels, config)

    @property
    def obs_dim(self) -> int:
        return self.actor.sizes[0]

    def parameters(self) -> dict:
        out = {f"actor.{k}": v for k, v in self.actor.params.items()}
        out.update({f"critic.{k}": v for k, v in self.critic.params.items()})
        return out


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_obs(model: PpoModel, obs):
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    if x.shape[1] != model.obs_dim:
        raise ShapeError(f"observation has {x.shape[1]} entries, model expects {model.obs_dim}")
    return x


def policy_forward(model: PpoModel, obs):
    """Per-head action probabilities and the value estimate.

    A single observation gives probabilities of shape (heads, levels) and a
    float value; a batch adds a leading axis to both.
    """
    x = _check_obs(model, obs)
    logits, _ = model.actor.forward(x)
    logp = _log_softmax(logits.reshape(len(x), model.num_heads, model.levels))
    value, _ = model.critic.forward(x)
    probs, value = np.exp(logp), value[:, 0]
    if np.ndim(obs) == 1:
        return probs[0], float(value[0])
    return probs, value


def action_log_prob(model: PpoModel, obs, actions) -> np.ndarray:
    """Joint log-probability: the sum of the head log-probabilities."""
    x = _check_obs(model, obs)
    logits, _ = model.actor.forward(x)
    logp = _log_softmax(logits.reshape(len(x), model.num_heads, model.levels))
    a = np.atleast_2d(actions)
    return np.take_along_axis(logp, a[:, :, None], axis=2)[:, :, 0].sum(axis=1)


def sample_action(model: PpoModel, obs, rng: np.random.Generator):
    """Sampled level per head, its joint log-probability and the value."""
    probs, value = policy_forward(model, obs)
    u = rng.random((model.num_heads, 1))
    a = np.minimum((probs.cumsum(axis=1) < u).sum(axis=1), model.levels - 1)
    logp = float(np.log(probs[np.arange(model.num_heads), a]).sum())
    return a, logp, value


def greedy_action(model: PpoModel, obs) -> np.ndarray:
    x = _check_obs(model, obs)
    logits, _ = model.actor.forward(x)
    return np.argmax(logits.reshape(model.num_heads, model.levels), axis=1)


def advantage_nstep(rewards, values, gamma: float, nstep: int, bootstrap: float = 0.0) -> np.ndarray:
    """``A_t = sum_{k<n} g^k r_{t+k} + g^n V(s_{t+n}) - V(s_t)``.

    Near the end of the sequence the sum stops at the last reward and the
    value past it is ``bootstrap`` (zero for a terminal state).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.shape != v.shape:
        raise ShapeError("rewards and values must align")
    if nstep < 1:
        raise ConfigError("nstep must be >= 1")
    T = len(r)
    v_ext = np.concatenate([v, [bootstrap]])
    out = np.empty(T)
    for t in range(T):
        end = min(t + nstep, T)
        disc = gamma ** np.arange(end - t)
        out[t] = disc @ r[t:end] + gamma ** (end - t) * v_ext[end] - v[t]
    return out


# --- losses with analytic gradients ---------------------------------------------


def actor_loss(model: PpoModel, obs, actions, old_logp, adv, clip: float | None = None, entropy_coef: float | None = None):
    """Negated clipped surrogate (minus entropy bonus), its gradient and stats."""
    cfg = model.config
    clip = cfg.clip if clip is None else clip
    ent_c = cfg.entropy_coef if entropy_coef is None else entropy_coef
    x = _check_obs(model, obs)
    B, H, Lq = len(x), model.num_heads, model.levels
    logits, cache = model.actor.forward(x)
    logp_all = _log_softmax(logits.reshape(B, H, Lq))
    probs = np.exp(logp_all)
    a = np.atleast_2d(actions)
    logp = np.take_along_axis(logp_all, a[:, :, None], axis=2)[:, :, 0].sum(axis=1)
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1 - clip, 1 + clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    entropy = -(probs * logp_all).sum(axis=2).sum(axis=1)
    loss = -surr.mean() - ent_c * entropy.mean()

    # d(-surr)/dlogp = -ratio*adv where the unclipped branch is active
    active = ratio * adv <= clipped * adv
    dlogp = np.where(active, -ratio * adv, 0.0) / B
    onehot = np.zeros((B, H, Lq))
    np.put_along_axis(onehot, a[:, :, None], 1.0, axis=2)
    g = dlogp[:, None, None] * (onehot - probs)
    if ent_c:
        # dH/dz = -p (log p + H_head), per head
        h_head = -(probs * logp_all).sum(axis=2, keepdims=True)
        g += ent_c / B * probs * (logp_all + h_head)
    grads = model.actor.backward(cache, g.reshape(B, H * Lq))
    stats = {
        "ratio_mean": float(ratio.mean()),
        "clip_frac": float(np.mean(np.abs(ratio - 1) > clip)),
        "approx_kl": float(np.mean(old_logp - logp)),
        "entropy": float(entropy.mean()),
    }
    return float(loss), grads, stats


def critic_loss(model: PpoModel, obs, returns):
    """Mean squared error of V against the n-step return, and its gradient."""
    x = _check_obs(model, obs)
    v, cache = model.critic.forward(x)
    err = v[:, 0] - np.asarray(returns, dtype=float)
    loss = float(np.mean(err**2))
    grads = model.critic.backward(cache, (2.0 * err / len(x))[:, None])
    return loss, grads


@dataclass
class Rollout:
    obs: np.ndarray  # (T, obs_dim)
    actions: np.ndarray  # (T, heads)
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray

    def __len__(self):
        return len(self.rewards)


def ppo_update(model: PpoModel, rollouts, rng: np.random.Generator | None = None) -> dict:
    """Several epochs of minibatch Adam steps on the actor and critic losses."""
    cfg = model.config
    rollouts = [rollouts] if isinstance(rollouts, Rollout) else list(rollouts)
    obs = np.concatenate([r.obs for r in rollouts])
    actions = np.concatenate([r.actions for r in rollouts])
    old_logp = np.concatenate([r.logp for r in rollouts])
    adv = np.concatenate([advantage_nstep(r.rewards, r.values, cfg.gamma, cfg.nstep) for r in rollouts])
    returns = adv + np.concatenate([r.values for r in rollouts])
    if cfg.normalize_advantages and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(adv)
    if cfg.batch_size > n:
        raise ConfigError(f"batch size {cfg.batch_size} exceeds the {n} collected samples")
    rng = rng or np.random.Generator(np.random.PCG64(cfg.seed))
    hist = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            la, ga, st = actor_loss(model, obs[idx], actions[idx], old_logp[idx], adv[idx])
            lc, gc = critic_loss(model, obs[idx], returns[idx])
            if not (np.isfinite(la) and np.isfinite(lc)):
                raise TrainingError(
                    f"non-finite loss (actor {la}, critic {lc})",
                    snapshot={"actor_loss": la, "critic_loss": lc, "stats": st, "adam_step": model.actor_opt.step},
                )
            na = clip_by_norm(ga, cfg.grad_clip)
            nc = clip_by_norm(gc, cfg.grad_clip)
            model.actor_opt.update(model.actor.params, ga)
            model.critic_opt.update(model.critic.params, gc)
            hist.append((la, lc, st["clip_frac"], st["approx_kl"], st["entropy"], na, nc))
    h = np.array(hist) if hist else np.full((1, 7), np.nan)
    keys = ("actor_loss", "critic_loss", "clip_frac", "approx_kl", "entropy", "actor_grad_norm", "critic_grad_norm")
    return {k: float(v) for k, v in zip(keys, h.mean(axis=0))}
