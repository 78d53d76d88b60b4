"""Central finite differences against the analytic actor and critic gradients."""

import numpy as np

from macalloc.drl.ppo import PpoConfig, PpoModel, action_log_prob, actor_loss, critic_loss


def small_model(seed, obs_dim=3, heads=2, levels=3, hidden=3):
    model = PpoModel.create(obs_dim, heads, levels, PpoConfig(hidden=hidden, seed=seed))
    # larger output weights so the softmax is far from uniform
    model.actor.params["W2"] *= 50.0
    return model


def batch(model, seed, B=6):
    rng = np.random.Generator(np.random.PCG64([seed, 99]))
    obs = rng.normal(size=(B, model.obs_dim))
    acts = rng.integers(0, model.levels, (B, model.num_heads))
    # old log-probs a little off the current ones keep ratios inside the clip band
    old = action_log_prob(model, obs, acts) + rng.uniform(-0.05, 0.05, B)
    adv = rng.normal(size=B)
    ret = rng.normal(size=B)
    return obs, acts, old, adv, ret


def _fd(net, loss_fn, h):
    out = {}
    for k, v in net.params.items():
        g = np.zeros_like(v)
        for i in np.ndindex(v.shape):
            x0 = v[i]
            v[i] = x0 + h
            up = loss_fn()
            v[i] = x0 - h
            dn = loss_fn()
            v[i] = x0
            g[i] = (up - dn) / (2 * h)
        out[k] = g
    return out


def _rel(a, b):
    va = np.concatenate([x.ravel() for x in a.values()])
    vb = np.concatenate([b[k].ravel() for k in a])
    return float(np.linalg.norm(va - vb) / max(np.linalg.norm(va), np.linalg.norm(vb), 1e-12))


def gradient_errors(seed, entropy_coef=0.01, h=1e-6):
    """Relative error of the actor and critic gradients for one parameter draw."""
    model = small_model(seed)
    obs, acts, old, adv, ret = batch(model, seed)
    _, ga, _ = actor_loss(model, obs, acts, old, adv, entropy_coef=entropy_coef)
    fa = _fd(model.actor, lambda: actor_loss(model, obs, acts, old, adv, entropy_coef=entropy_coef)[0], h)
    _, gc = critic_loss(model, obs, ret)
    fc = _fd(model.critic, lambda: critic_loss(model, obs, ret)[0], h)
    return _rel(ga, fa), _rel(gc, fc), model.actor.num_params(), model.critic.num_params()
