"""Monte Carlo evaluation and report plumbing.

Episodes are seeded individually (seed stream [base_seed, episode]), so a
run's numbers depend only on the experiment configuration and the base
seed: worker fan-out cannot reorder or change anything, and repeated
runs produce byte-identical reports.  Worker count comes from the
DESCENTLAB_WORKERS environment variable (default 1).
"""

import dataclasses
import math
import os

import numpy as np

from .environments import glideslope, make_env
from .guidance_drdv import DrDvPolicy
from .ppo_trainer import NNPolicy

# Metrics recorded when an episode faults instead of terminating.
FAULT_SENTINEL = 1.0e6

METRICS = ("pos", "vel", "fuel", "glideslope")


@dataclasses.dataclass
class EvalStats:
    """Per-metric mean / population std / max over an evaluation run."""

    episodes: int
    mean: dict
    std: dict
    max: dict
    success_rate: float

    @classmethod
    def from_rows(cls, rows):
        if not rows:
            raise ValueError("need at least one episode")
        out_mean, out_std, out_max = {}, {}, {}
        for key in METRICS:
            vals = np.array([r[key] for r in rows], dtype=float)
            out_mean[key] = float(vals.mean())
            out_std[key] = float(vals.std())
            out_max[key] = float(vals.max())
        success = float(np.mean([1.0 if r["success"] else 0.0 for r in rows]))
        return cls(len(rows), out_mean, out_std, out_max, success)


def make_policy(spec, kind, checkpoint=None):
    """drdv, or a trained policy loaded from a checkpoint (rl | meta-rl)."""
    if kind == "drdv":
        scale = spec.env.thrust_max if spec.body == "mars" else spec.env.axis_thrust
        return DrDvPolicy(
            spec.drdv,
            scale,
            spec.env.nav_period,
            commit_from_start=(spec.body == "asteroid"),
        )
    if kind in ("rl", "meta-rl", "nn"):
        if checkpoint is None:
            raise ValueError(f"policy kind {kind!r} needs a checkpoint path")
        return NNPolicy.from_checkpoint(checkpoint)
    raise ValueError(f"unknown policy kind {kind!r}")


def run_episode(env, policy, ep_rng, record=False):
    """One deterministic-policy episode; returns (metrics row, trajectory).

    The trajectory (when recorded) has one entry per navigation step:
    time, position, velocity, thrust, norms, mass, reward.
    """
    obs = env.reset(ep_rng)
    policy.reset()
    rows = [] if record else None
    done = False
    info = None
    while not done:
        action = policy.act(obs, env.guidance_view(), deterministic=True)
        res = env.step(action)
        obs, done, info = res.observation, res.done, res.info
        if record:
            st, thrust = info["state"], info["thrust"]
            rows.append(
                {
                    "t": st.t,
                    "r": st.r.copy(),
                    "v": st.v.copy(),
                    "thrust": np.asarray(thrust, dtype=float).copy(),
                    "mass": st.mass,
                    "reward": res.reward,
                }
            )
    state = info["state"]
    metrics = {
        "pos": float(np.linalg.norm(state.r)),
        "vel": float(np.linalg.norm(state.v)),
        "fuel": float(info["fuel_used"]),
        "glideslope": glideslope(state.v),
        "success": bool(info["success"]),
        "reason": info["reason"],
        "steps": len(rows) if record else None,
    }
    return metrics, rows


def _episode_batch(spec, policy, seed, indices):
    env = make_env(spec)
    out = []
    for ep in indices:
        ep_rng = np.random.default_rng([seed, ep])
        try:
            metrics, _ = run_episode(env, policy, ep_rng)
        except Exception as exc:  # fault: record, never drop
            metrics = {
                "pos": FAULT_SENTINEL,
                "vel": FAULT_SENTINEL,
                "fuel": FAULT_SENTINEL,
                "glideslope": 0.0,
                "success": False,
                "reason": f"fault:{type(exc).__name__}",
                "steps": None,
            }
            env = make_env(spec)
        metrics["episode"] = ep
        out.append(metrics)
    return out


def run_monte_carlo(policy, spec, episodes=None, seed=0):
    """Evaluate a policy over fresh per-episode randomizations.

    Returns (EvalStats, per-episode rows ordered by episode index).
    """
    n = spec.eval_episodes if episodes is None else int(episodes)
    if n < 1:
        raise ValueError("episodes must be >= 1")
    workers = int(os.environ.get("DESCENTLAB_WORKERS", "1"))
    indices = list(range(n))
    if workers > 1 and n > 1:
        import multiprocessing as mp

        chunks = [indices[w::workers] for w in range(workers)]
        with mp.get_context("fork").Pool(workers) as pool:
            parts = pool.starmap(
                _episode_batch, [(spec, policy, seed, c) for c in chunks if c]
            )
        rows = [r for part in parts for r in part]
        rows.sort(key=lambda r: r["episode"])
    else:
        rows = _episode_batch(spec, policy, seed, indices)
    return EvalStats.from_rows(rows), rows


# --------------------------------------------------------------------------
# Reports


def _g(x):
    return f"{x:.6g}"


def stats_csv_row(name, policy_kind, seed, stats):
    """Flat dict for one run; the unit of the `report` command."""
    row = {
        "run": name,
        "policy": policy_kind,
        "episodes": stats.episodes,
        "seed": seed,
        "success_rate": _g(stats.success_rate),
    }
    for key in METRICS:
        row[f"{key}_mean"] = _g(stats.mean[key])
        row[f"{key}_std"] = _g(stats.std[key])
        row[f"{key}_max"] = _g(stats.max[key])
    return row

STATS_FIELDS = ["run", "policy", "episodes", "seed", "success_rate"] + [
    f"{k}_{s}" for k in METRICS for s in ("mean", "std", "max")
]

_METRIC_LABELS = {
    "pos": "terminal position (m)",
    "vel": "terminal velocity (m/s)",
    "fuel": "fuel used (kg)",
    "glideslope": "glideslope (deg)",
}


def format_stats_text(name, policy_kind, seed, stats):
    lines = [
        f"run: {name}   policy: {policy_kind}   episodes: {stats.episodes}   seed: {seed}",
        f"{'metric':<26}{'mean':>12}{'std':>12}{'max':>12}",
    ]
    for key in METRICS:
        lines.append(
            f"{_METRIC_LABELS[key]:<26}"
            f"{_g(stats.mean[key]):>12}{_g(stats.std[key]):>12}{_g(stats.max[key]):>12}"
        )
    lines.append(f"{'success rate':<26}{_g(stats.success_rate):>12}")
    return "\n".join(lines) + "\n"


def write_report(path, name, policy_kind, seed, stats):
    """Persist one run as a single-row CSV (stable field order)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STATS_FIELDS)
        writer.writeheader()
        writer.writerow(stats_csv_row(name, policy_kind, seed, stats))


def read_report(path):
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def combine_reports(paths, fmt="text"):
    """Merge single-run reports into one comparison table."""
    rows = [r for p in paths for r in read_report(p)]
    if fmt == "csv":
        import csv
        import io

        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=STATS_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
        return buf.getvalue()
    cols = ["run", "policy", "episodes", "pos_mean", "pos_std", "pos_max",
            "vel_mean", "vel_std", "vel_max", "fuel_mean", "success_rate"]
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in cols}
    header = "  ".join(c.ljust(widths[c]) for c in cols)
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in cols))
    return "\n".join(lines) + "\n"


def write_trajectory_log(rows, path):
    """Delimited per-step time series: t, r, v, thrust, norms, mass, reward."""
    cols = [
        "t", "rx", "ry", "rz", "vx", "vy", "vz", "tx", "ty", "tz",
        "r_norm", "v_norm", "t_norm", "mass", "reward",
    ]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            r, v, thr = row["r"], row["v"], row["thrust"]
            vals = [
                row["t"], r[0], r[1], r[2], v[0], v[1], v[2],
                thr[0], thr[1], thr[2],
                math.sqrt(float(r @ r)), math.sqrt(float(v @ v)),
                math.sqrt(float(thr @ thr)), row["mass"], row["reward"],
            ]
            fh.write(",".join(f"{x:.12g}" for x in vals) + "\n")
