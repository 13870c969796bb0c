"""Proximal policy optimization for recurrent landing policies.

The training loop alternates three phases.  Collection runs the current
stochastic policy for a batch of complete episodes, snapshotting the
hidden state of both networks before every step so that any segment can
be replayed exactly.  Processing computes per-step discounted returns
within each episode (no bootstrapping across termination) and advantages
as empirical return minus the value baseline, normalized per batch.  The
update phase splits episodes into fixed-length unroll segments, runs
several epochs of gradient ascent on the clipped surrogate objective and
descent on the value regression loss, and measures the policy KL
divergence after every epoch: the epoch loop stops early when KL runs
past 4x its target, and the clipping radius adapts to steer the measured
KL toward the target.

Observations are filtered through a running mean/variance normalizer
(clipped at +/-10 sigma) whose statistics update only between
iterations, so every stored observation is exactly what the networks
saw.  All state needed to resume, the normalizer included, lives in the
checkpoint.
"""

import csv
import logging
import os

import numpy as np

from .environments import make_env
from .neuralnet import (
    Network,
    gaussian_kl,
    gaussian_logp,
    load_arrays,
    sample_action,
    save_arrays,
)

logger = logging.getLogger(__name__)

ACT_DIM = 3


class RunningNorm:
    """Streaming mean/variance normalizer with symmetric clipping.

    Batches merge via the parallel variance formula, so update order
    within an iteration cannot change the statistics.
    """

    def __init__(self, dim, clip=10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.clip = float(clip)

    def update(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.mean.size)
        n = x.shape[0]
        if n == 0:
            return
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        if self.count == 0.0:
            self.mean, self.var, self.count = b_mean, b_var, float(n)
            return
        total = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        m2 = self.var * self.count + b_var * n + delta**2 * (self.count * n / total)
        self.var = m2 / total
        self.count = total

    def normalize(self, obs):
        scale = np.sqrt(self.var + 1e-8) if self.count > 0.0 else np.ones_like(self.var)
        z = (np.asarray(obs, dtype=float) - (self.mean if self.count > 0.0 else 0.0)) / scale
        return np.clip(z, -self.clip, self.clip)

    def state_arrays(self, prefix="norm/"):
        return {
            prefix + "mean": self.mean,
            prefix + "var": self.var,
            prefix + "count": np.array([self.count]),
        }

    @classmethod
    def from_arrays(cls, arrays, prefix="norm/"):
        out = cls(arrays[prefix + "mean"].size)
        out.mean = arrays[prefix + "mean"].copy()
        out.var = arrays[prefix + "var"].copy()
        out.count = float(arrays[prefix + "count"][0])
        return out


# --------------------------------------------------------------------------
# Scalar pieces of the objective


def discounted_return(rewards, gamma):
    """R_k = sum_{l>=k} gamma^(l-k) r_l, computed within one episode."""
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    acc = 0.0
    for k in range(rewards.size - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out


def prob_ratio(logp_new, logp_old):
    return np.exp(np.asarray(logp_new) - np.asarray(logp_old))


def clipped_objective(ratio, adv, eps):
    """Mean of min(ratio * A, clip(ratio) * A): the surrogate to ascend."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    return float(np.minimum(ratio * adv, clipped * adv).mean())


def adapt_clip(kl_measured, eps, kl_target):
    """New clipping radius and a learning-rate factor from measured KL.

    KL beyond twice the target shrinks the radius (floor 0.01), below
    half the target grows it (cap 0.5); the learning rate moves with it.
    """
    if kl_measured > 2.0 * kl_target:
        return max(eps / 1.5, 0.01), 1.0 / 1.5
    if kl_measured < 0.5 * kl_target:
        return min(eps * 1.5, 0.5), 1.5
    return eps, 1.0


# --------------------------------------------------------------------------
# Rollouts


def collect_rollouts(policy, value, env_factory, n_episodes, rng, norm=None):
    """Run `n_episodes` complete episodes under the stochastic policy.

    Returns a list of episode dicts carrying everything segment replay
    needs: normalized observations as the networks saw them, raw
    observations for the normalizer refresh, actions, rewards, log
    probabilities and action means under the sampling weights, and the
    pre-step hidden states of both networks.  A faulting episode is
    logged, discarded, and resampled with the next seed stream.
    """
    env = env_factory()
    if norm is None:
        norm = RunningNorm(env.obs_dim)
    streams = list(rng.spawn(2 * n_episodes + 8))
    log_std = policy.params["log_std"]
    episodes = []
    attempts = 0
    while len(episodes) < n_episodes:
        if not streams:
            raise RuntimeError("too many faulted episodes during collection")
        ep_rng = streams.pop(0)
        attempts += 1
        try:
            episodes.append(_run_episode(env, policy, value, log_std, norm, ep_rng))
        except (FloatingPointError, ValueError) as exc:
            logger.warning("episode faulted (%s); resampling", exc)
    return episodes


def _run_episode(env, policy, value, log_std, norm, ep_rng):
    obs_raw = env.reset(ep_rng)
    h_p = policy.init_hidden()
    h_v = value.init_hidden()
    rows = {k: [] for k in ("obs", "raw", "act", "rew", "logp", "mean", "hp", "hv")}
    done = False
    info = None
    while not done:
        obs = norm.normalize(obs_raw)
        rows["raw"].append(np.array(obs_raw, dtype=float))
        rows["obs"].append(obs)
        rows["hp"].append(h_p[0].copy())
        rows["hv"].append(h_v[0].copy())
        mean, h_p = policy.step(obs, h_p)
        _, h_v = value.step(obs, h_v)
        act = sample_action(mean, log_std, ep_rng)
        rows["mean"].append(mean)
        rows["act"].append(act)
        rows["logp"].append(float(gaussian_logp(mean, log_std, act)))
        res = env.step(act)
        rows["rew"].append(res.reward)
        obs_raw = res.observation
        done = res.done
        info = res.info
    state = info["state"]
    return {
        "obs": np.asarray(rows["obs"]),
        "raw": np.asarray(rows["raw"]),
        "act": np.asarray(rows["act"]),
        "rew": np.asarray(rows["rew"]),
        "logp": np.asarray(rows["logp"]),
        "mean": np.asarray(rows["mean"]),
        "hp": np.asarray(rows["hp"]),
        "hv": np.asarray(rows["hv"]),
        "terminal_pos": float(np.linalg.norm(state.r)),
        "terminal_vel": float(np.linalg.norm(state.v)),
        "fuel": float(info["fuel_used"]),
        "success": bool(info["success"]),
        "reason": info["reason"],
    }


def value_loss(batch, value_net):
    """Mean squared error of the value baseline against the returns."""
    total = 0.0
    count = 0
    for ep in batch:
        v, _, _ = value_net.forward(ep["obs"][None], value_net.init_hidden())
        total += float(((v[0, :, 0] - ep["ret"]) ** 2).sum())
        count += ep["ret"].size
    return total / count


def scale_returns(ret_norm, ret):
    """Standardize value-regression targets by the running return stats.

    The value network regresses standardized returns so its output layer
    works at unit scale regardless of the reward magnitudes; predictions
    are mapped back with unscale_values wherever return units are needed.
    """
    if ret_norm is None or ret_norm.count <= 0.0:
        return ret
    return (ret - ret_norm.mean[0]) / np.sqrt(ret_norm.var[0] + 1e-8)


def unscale_values(ret_norm, v):
    """Map standardized value predictions back to return units."""
    if ret_norm is None or ret_norm.count <= 0.0:
        return v
    return v * np.sqrt(ret_norm.var[0] + 1e-8) + ret_norm.mean[0]


def advantage(batch, value_net, ret_norm=None):
    """A_k = R_k - V(o_k) with replayed hidden states, then normalized
    to zero mean and unit variance across the whole batch."""
    raw = []
    for ep in batch:
        v, _, _ = value_net.forward(ep["obs"][None], value_net.init_hidden())
        raw.append(ep["ret"] - unscale_values(ret_norm, v[0, :, 0]))
    flat = np.concatenate(raw)
    mu = flat.mean()
    sd = flat.std()
    scale = sd if sd > 1e-8 else 1.0
    for ep, a in zip(batch, raw):
        ep["adv"] = (a - mu) / scale
    return (flat - mu) / scale


def process_batch(batch, value_net, gamma, ret_norm=None):
    """Attach returns, value targets, and normalized advantages."""
    for ep in batch:
        ep["ret"] = discounted_return(ep["rew"], gamma)
        ep["ret_v"] = scale_returns(ret_norm, ep["ret"])
    advantage(batch, value_net, ret_norm)
    return batch


# --------------------------------------------------------------------------
# Segment assembly and the update


def make_segments(batch, unroll):
    """Stack fixed-length segments from all episodes, zero-padded.

    Each segment starts from the hidden states snapshotted during
    collection, so replay inside the segment is exact while gradients
    stay truncated at the segment boundary.
    """
    obs, act, adv, ret, ret_v, logp, mean, h_p, h_v, mask = ([] for _ in range(10))
    for ep in batch:
        n = ep["obs"].shape[0]
        for s in range(0, n, unroll):
            e = min(s + unroll, n)
            pad = unroll - (e - s)

            def padded(a):
                chunk = a[s:e]
                if pad == 0:
                    return chunk
                width = [(0, pad)] + [(0, 0)] * (chunk.ndim - 1)
                return np.pad(chunk, width)

            obs.append(padded(ep["obs"]))
            act.append(padded(ep["act"]))
            adv.append(padded(ep["adv"]))
            ret.append(padded(ep["ret"]))
            ret_v.append(padded(ep.get("ret_v", ep["ret"])))
            logp.append(padded(ep["logp"]))
            mean.append(padded(ep["mean"]))
            h_p.append(ep["hp"][s])
            h_v.append(ep["hv"][s])
            m = np.zeros(unroll)
            m[: e - s] = 1.0
            mask.append(m)
    return {
        "obs": np.asarray(obs),
        "act": np.asarray(act),
        "adv": np.asarray(adv),
        "ret": np.asarray(ret),
        "ret_v": np.asarray(ret_v),
        "logp_old": np.asarray(logp),
        "mean_old": np.asarray(mean),
        "h_p": np.asarray(h_p),
        "h_v": np.asarray(h_v),
        "mask": np.asarray(mask),
    }


class Adam:
    """Standard Adam over a parameter dict, with a mutable rate multiplier
    for the non-finite-gradient halving rule."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.mult = 1.0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        """Apply one descent step; returns False (and halves the rate)
        when any gradient is non-finite."""
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                self.mult = max(self.mult * 0.5, 1e-3)
                logger.warning("non-finite gradient; halving learning rate")
                return False
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        rate = self.lr * self.mult
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= rate * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
        return True

    def scale(self, factor, lo=0.1, hi=10.0):
        self.mult = float(np.clip(self.mult * factor, lo, hi))

    def state_arrays(self, prefix):
        out = {prefix + "t": np.array([float(self.t)]), prefix + "mult": np.array([self.mult])}
        for k in self.m:
            out[prefix + "m/" + k] = self.m[k]
            out[prefix + "v/" + k] = self.v[k]
        return out

    def restore(self, arrays, prefix):
        self.t = int(arrays[prefix + "t"][0])
        self.mult = float(arrays[prefix + "mult"][0])
        for k in self.m:
            self.m[k] = arrays[prefix + "m/" + k].copy()
            self.v[k] = arrays[prefix + "v/" + k].copy()


def _policy_grads(policy, segs, eps):
    """Surrogate loss value and exact gradients over all segments.

    The gradient mask follows the min in the objective: a sample
    contributes only where the unclipped branch is active (selected by
    the min, or the ratio sits inside the clipping band).
    """
    mask = segs["mask"]
    m_count = mask.sum()
    log_std = policy.params["log_std"]
    var = np.exp(2.0 * log_std)

    out, _, cache = policy.forward(segs["obs"], segs["h_p"], want_cache=True)
    logp_new = gaussian_logp(out, log_std, segs["act"])
    ratio = prob_ratio(logp_new, segs["logp_old"])
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    adv = segs["adv"]
    surrogate = np.minimum(ratio * adv, clipped * adv)
    loss = -float((surrogate * mask).sum() / m_count)

    inside = (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
    active = (ratio * adv <= clipped * adv) | inside
    dratio = -(adv * active * mask) / m_count
    dlogp = dratio * ratio
    diff = segs["act"] - out
    dmean = dlogp[..., None] * diff / var
    grads = policy.backward(cache, dmean)
    zsq = diff * diff / var
    grads["log_std"] = (dlogp[..., None] * (zsq - 1.0)).sum(axis=(0, 1))
    return loss, grads


def _value_grads(value, segs):
    mask = segs["mask"]
    m_count = mask.sum()
    target = segs.get("ret_v", segs["ret"])
    out, _, cache = value.forward(segs["obs"], segs["h_v"], want_cache=True)
    err = (out[..., 0] - target) * mask
    loss = float((err * err).sum() / m_count)
    grads = value.backward(cache, (2.0 * err / m_count)[..., None])
    return loss, grads


def clip_grad_norm(grads, max_norm):
    """Scale a gradient dict down so its global L2 norm is at most max_norm.

    Returns the pre-clip norm.  Bounds the occasional outsized recurrent
    gradient so a single batch cannot move the policy far."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm and total > 0.0:
        factor = max_norm / total
        for k in grads:
            grads[k] = grads[k] * factor
    return total


def _policy_kl(policy, segs, ref_mean=None, ref_log_std=None):
    """Mean KL from a reference policy to the current weights.

    Defaults to the sampling policy; passing the previous iterate's
    outputs measures the movement of a single parameter update instead.
    Returns (kl, current means) so callers can chain references.
    """
    out, _, _ = policy.forward(segs["obs"], segs["h_p"])
    if ref_mean is None:
        ref_mean, ref_log_std = segs["mean_old"], segs["log_std_old"]
    kl = gaussian_kl(ref_mean, ref_log_std, out, policy.params["log_std"])
    return float((kl * segs["mask"]).sum() / segs["mask"].sum()), out


def update(batch, policy, value, cfg, opt_p, opt_v, eps):
    """One full PPO update: epochs of ascent on the clipped surrogate and
    descent on the value regression, KL-gated.  Returns diagnostics and
    the adapted clipping radius."""
    segs = make_segments(batch, cfg.unroll)
    segs["log_std_old"] = policy.params["log_std"].copy()
    kl = 0.0
    v_loss = p_loss = 0.0
    epochs_run = 0
    # The KL gate measures the movement of each parameter update: every
    # epoch compares the post-step policy against the previous iterate
    # (starting from the sampling policy), so the clip radius and learning
    # rate are steered toward a fixed per-step displacement.
    ref_mean = segs["mean_old"]
    ref_log_std = segs["log_std_old"]
    kl_steps = []
    for _ in range(cfg.epochs_per_update):
        p_loss, p_grads = _policy_grads(policy, segs, eps)
        clip_grad_norm(p_grads, 0.5)
        opt_p.step(policy.params, p_grads)
        v_loss, v_grads = _value_grads(value, segs)
        clip_grad_norm(v_grads, 5.0)
        opt_v.step(value.params, v_grads)
        epochs_run += 1
        kl, ref_mean = _policy_kl(policy, segs, ref_mean, ref_log_std)
        ref_log_std = policy.params["log_std"].copy()
        kl_steps.append(kl)
        if kl > 4.0 * cfg.kl_target:
            break
    # Adapt on the mean per-step movement: the last step alone is a
    # high-variance control signal and makes the radius oscillate.
    kl = float(np.mean(kl_steps)) if kl_steps else 0.0
    new_eps, lr_scale = adapt_clip(kl, eps, cfg.kl_target)
    opt_p.scale(lr_scale)

    ret = segs.get("ret_v", segs["ret"])[segs["mask"] > 0]
    out, _, _ = value.forward(segs["obs"], segs["h_v"])
    resid = ret - out[..., 0][segs["mask"] > 0]
    ret_var = float(ret.var())
    diag = {
        "kl": kl,
        "eps": new_eps,
        "policy_loss": p_loss,
        "value_loss": v_loss,
        "epochs": epochs_run,
        "explained_variance": 1.0 - float(resid.var()) / max(ret_var, 1e-12),
    }
    return diag, new_eps


# --------------------------------------------------------------------------
# Full training runs


LOG_FIELDS = [
    "iteration",
    "episodes",
    "pos_mean",
    "pos_std",
    "pos_max",
    "vel_mean",
    "vel_std",
    "vel_max",
    "kl",
    "eps",
    "value_loss",
    "fuel_mean",
]


def batch_stats(batch):
    pos = np.array([ep["terminal_pos"] for ep in batch])
    vel = np.array([ep["terminal_vel"] for ep in batch])
    fuel = np.array([ep["fuel"] for ep in batch])
    return {
        "pos_mean": pos.mean(),
        "pos_std": pos.std(),
        "pos_max": pos.max(),
        "vel_mean": vel.mean(),
        "vel_std": vel.std(),
        "vel_max": vel.max(),
        "fuel_mean": fuel.mean(),
        "success_rate": float(np.mean([ep["success"] for ep in batch])),
    }


def train_loop(env_factory, policy, value, norm, cfg, iterations, seed,
               start_iteration=0, eps=None, opt_p=None, opt_v=None,
               on_iteration=None, ret_norm=None):
    """Iterate collect / process / update, refreshing the observation
    and return normalizers after each weight update.  Returns one stats
    row per iteration; optimizer objects are mutated in place so callers
    can checkpoint them."""
    eps = cfg.clip_init if eps is None else eps
    opt_p = opt_p or Adam(policy.params, cfg.lr_policy)
    opt_v = opt_v or Adam(value.params, cfg.lr_value)
    ret_norm = RunningNorm(1) if ret_norm is None else ret_norm
    rows = []
    for it in range(start_iteration, start_iteration + iterations):
        rng = np.random.default_rng([seed, it])
        batch = collect_rollouts(policy, value, env_factory, cfg.episodes_per_batch, rng, norm)
        process_batch(batch, value, cfg.discount, ret_norm)
        diag, eps = update(batch, policy, value, cfg, opt_p, opt_v, eps)
        for ep in batch:
            norm.update(ep["raw"])
            ret_norm.update(ep["ret"].reshape(-1, 1))
        row = {"iteration": it, "episodes": (it + 1) * cfg.episodes_per_batch}
        row.update(batch_stats(batch))
        row.update({"kl": diag["kl"], "eps": eps, "value_loss": diag["value_loss"]})
        row["explained_variance"] = diag["explained_variance"]
        rows.append(row)
        if on_iteration is not None:
            on_iteration(row)
    return rows, eps, opt_p, opt_v


def save_checkpoint(path, policy, value, norm, cfg, iteration, eps, opt_p, opt_v,
                    ret_norm=None):
    arrays = {}
    arrays.update({"p/" + k: v for k, v in policy.params.items()})
    arrays.update({"v/" + k: v for k, v in value.params.items()})
    arrays.update(norm.state_arrays())
    arrays.update((ret_norm or RunningNorm(1)).state_arrays("rn/"))
    arrays.update(opt_p.state_arrays("op/"))
    arrays.update(opt_v.state_arrays("ov/"))
    arrays["scal/iteration"] = np.array([float(iteration)])
    arrays["scal/eps"] = np.array([eps])
    meta = {
        "obs_dim": policy.obs_dim,
        "act_dim": policy.act_dim,
        "unroll": cfg.unroll,
        "recurrent": policy.recurrent,
    }
    save_arrays(path, meta, arrays)


def load_checkpoint(path):
    """Rebuild networks, normalizer, optimizers, and counters."""
    meta, arrays = load_arrays(path)
    recurrent = meta["recurrent"]
    p_params = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("p/")}
    v_params = {k[2:]: v.copy() for k, v in arrays.items() if k.startswith("v/")}
    policy = Network(meta["obs_dim"], meta["act_dim"], "policy",
                     recurrent=recurrent, params=p_params)
    value = Network(meta["obs_dim"], meta["act_dim"], "value",
                    recurrent=recurrent, params=v_params)
    norm = RunningNorm.from_arrays(arrays)
    ret_norm = (RunningNorm.from_arrays(arrays, "rn/")
                if "rn/mean" in arrays else RunningNorm(1))
    return {
        "policy": policy,
        "value": value,
        "norm": norm,
        "ret_norm": ret_norm,
        "iteration": int(arrays["scal/iteration"][0]),
        "eps": float(arrays["scal/eps"][0]),
        "arrays": arrays,
        "meta": meta,
    }


def train_experiment(spec, out_dir, iterations=None, seed=0, resume=None):
    """Train one experiment to a checkpoint plus a learning-curve CSV.

    `resume` names an existing checkpoint; training continues from its
    iteration counter and appends to the learning curve.
    """
    os.makedirs(out_dir, exist_ok=True)
    cfg = spec.train
    iterations = cfg.iterations if iterations is None else iterations
    probe = make_env(spec)
    act_dim = ACT_DIM
    if resume:
        ck = load_checkpoint(resume)
        policy, value, norm = ck["policy"], ck["value"], ck["norm"]
        ret_norm = ck["ret_norm"]
        start, eps = ck["iteration"], ck["eps"]
        opt_p = Adam(policy.params, cfg.lr_policy)
        opt_v = Adam(value.params, cfg.lr_value)
        opt_p.restore(ck["arrays"], "op/")
        opt_v.restore(ck["arrays"], "ov/")
    else:
        init_rng = np.random.default_rng([seed, 0xD15C])
        policy = Network(probe.obs_dim, act_dim, "policy", rng=init_rng,
                         recurrent=cfg.recurrent, log_std_init=cfg.log_std_init)
        value = Network(probe.obs_dim, act_dim, "value", rng=init_rng,
                        recurrent=cfg.recurrent)
        norm = RunningNorm(probe.obs_dim)
        ret_norm = RunningNorm(1)
        start, eps = 0, cfg.clip_init
        opt_p = opt_v = None

    curve_path = os.path.join(out_dir, f"{spec.name}-curve.csv")
    ckpt_path = os.path.join(out_dir, f"{spec.name}.ckpt")
    write_header = start == 0 or not os.path.exists(curve_path)
    curve = open(curve_path, "w" if write_header else "a", newline="")
    writer = csv.DictWriter(curve, fieldnames=LOG_FIELDS, extrasaction="ignore")
    if write_header:
        writer.writeheader()

    def on_iteration(row):
        writer.writerow({k: _fmt(row[k]) for k in LOG_FIELDS})
        curve.flush()
        logger.info(
            "iter %d pos %.2f vel %.2f success %.0f%% kl %.4f",
            row["iteration"], row["pos_mean"], row["vel_mean"],
            100.0 * row["success_rate"], row["kl"],
        )

    try:
        rows, eps, opt_p, opt_v = train_loop(
            lambda: make_env(spec), policy, value, norm, cfg, iterations, seed,
            start_iteration=start, eps=eps, opt_p=opt_p, opt_v=opt_v,
            on_iteration=on_iteration, ret_norm=ret_norm,
        )
    finally:
        curve.close()
    save_checkpoint(ckpt_path, policy, value, norm, cfg, start + iterations, eps,
                    opt_p, opt_v, ret_norm=ret_norm)
    return {"checkpoint": ckpt_path, "curve": curve_path, "rows": rows,
            "policy": policy, "value": value, "norm": norm}


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return x


class NNPolicy:
    """Evaluation-time wrapper: normalizes observations, advances the
    recurrent state, and returns the action mean (or a sample)."""

    kind = "nn"

    def __init__(self, policy_net, norm):
        self.net = policy_net
        self.norm = norm
        self._h = policy_net.init_hidden()

    @classmethod
    def from_checkpoint(cls, path):
        ck = load_checkpoint(path)
        return cls(ck["policy"], ck["norm"])

    def reset(self):
        self._h = self.net.init_hidden()

    def act(self, obs, view=None, rng=None, deterministic=True):
        mean, self._h = self.net.step(self.norm.normalize(obs), self._h)
        if deterministic or rng is None:
            return mean
        return sample_action(mean, self.net.params["log_std"], rng)
