"""Command-line interface.

Subcommands: train, evaluate, baseline (classical guidance), sensor-check
(altimeter / LIDAR model diagnostics), and report (merge evaluation
outputs into comparison tables).  All runs are deterministic in
(configuration, seed); rerunning a command reproduces its outputs byte
for byte.
"""

import argparse
import dataclasses
import logging
import sys

import numpy as np

from . import harness, sensors
from .config import load_config_file, load_preset, preset_names
from .ppo_trainer import train_experiment

SENSOR_EXPERIMENTS = ("exp3", "exp3-target", "exp6")


def _load_spec(parser, name):
    try:
        return load_preset(name)
    except KeyError:
        if name.endswith((".yaml", ".yml")):
            try:
                return load_config_file(name)
            except OSError as exc:
                parser.error(f"cannot read config file {name}: {exc}")
        parser.error(
            f"unknown experiment {name!r}; presets: {', '.join(preset_names())}"
        )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="descentlab",
        description="Powered-descent guidance experiments: training, "
        "classical baselines, Monte Carlo evaluation, sensor diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy on an experiment preset")
    p_train.add_argument("--experiment", required=True)
    p_train.add_argument("--policy", choices=("rl", "meta-rl"), default="meta-rl")
    p_train.add_argument("--unroll", type=int, default=None,
                         help="recurrent segment length (1, 20, 60, ...)")
    p_train.add_argument("--iterations", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--resume", default=None, help="checkpoint to continue from")

    p_eval = sub.add_parser("evaluate", help="Monte Carlo evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--experiment", required=True)
    p_eval.add_argument("--episodes", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--report", default=None, help="write single-run CSV here")
    p_eval.add_argument("--trajectory", default=None,
                        help="write episode 0's time series here")

    p_base = sub.add_parser("baseline", help="run the classical guidance baseline")
    p_base.add_argument("--experiment", required=True)
    p_base.add_argument("--episodes", type=int, default=None)
    p_base.add_argument("--seed", type=int, default=0)
    p_base.add_argument("--report", default=None)
    p_base.add_argument("--trajectory", default=None)

    p_sens = sub.add_parser("sensor-check", help="sensor model diagnostics")
    p_sens.add_argument("--experiment", choices=("3", "6"), required=True)

    p_rep = sub.add_parser("report", help="merge run reports into one table")
    p_rep.add_argument("--inputs", nargs="+", required=True)
    p_rep.add_argument("--format", choices=("text", "csv"), default="text")
    return parser


def _evaluate(parser, spec, policy, kind, args):
    stats, rows = harness.run_monte_carlo(
        policy, spec, episodes=args.episodes, seed=args.seed
    )
    text = harness.format_stats_text(spec.name, kind, args.seed, stats)
    sys.stdout.write(text)
    if args.report:
        harness.write_report(args.report, spec.name, kind, args.seed, stats)
    if args.trajectory:
        env = harness.make_env(spec)
        _, traj = harness.run_episode(
            env, policy, np.random.default_rng([args.seed, 0]), record=True
        )
        harness.write_trajectory_log(traj, args.trajectory)
    return 0


def _sensor_check_radar():
    dtm = sensors.generate_dtm(19)
    rows = sensors.altimeter_error_stats(
        dtm, [500.0, 600.0, 700.0, 800.0], 1500, np.random.default_rng(8)
    )
    out = [
        "plane-stack altimeter vs exact ray march "
        f"(terrain seed 19, {dtm.nx}x{dtm.ny} cells, {dtm.spacing:g} m spacing)",
        f"{'elevation_m':>12}{'mean_err_m':>12}{'std_err_m':>12}"
        f"{'max_err_m':>12}{'miss_pct':>10}",
    ]
    for r in rows:
        out.append(
            f"{r['elevation']:>12.0f}{r['mean']:>12.2f}{r['std']:>12.2f}"
            f"{r['max']:>12.2f}{r['miss_pct']:>10.2f}"
        )
    return "\n".join(out) + "\n"


def _sensor_check_lidar():
    mesh = sensors.generate_asteroid_mesh(7)
    sphere = sensors.generate_asteroid_mesh(7, bump=0.0)
    radii = mesh.radii
    rng = np.random.default_rng(8)
    worst = 0.0
    checked = 0
    while checked < 200:
        vid = int(rng.integers(len(sphere.vertices)))
        vert = sphere.vertices[vid]
        origin = rng.normal(size=3)
        origin = origin / np.linalg.norm(origin) * rng.uniform(400.0, 1500.0)
        if np.dot(vert, origin - vert) <= 1e-6:
            continue  # vertex occluded from this origin
        direction = vert - origin
        dist = float(np.linalg.norm(direction))
        t, hit, _ = sensors.ray_mesh_range(origin, direction / dist, sphere)
        worst = max(worst, abs(t - dist) if hit else np.inf)
        checked += 1
    out = [
        f"asteroid mesh (seed 7): {len(mesh.vertices)} vertices, "
        f"{len(mesh.faces)} faces",
        f"radius min/mean/max: {radii.min():.2f} / {radii.mean():.2f} / "
        f"{radii.max():.2f} m  (bounds 212.50 / 287.50)",
        f"ray caster vs analytic sphere at 200 visible vertices: "
        f"max |error| = {worst:.3g} m",
    ]
    return "\n".join(out) + "\n"


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "train":
        spec = _load_spec(parser, args.experiment)
        train_cfg = spec.train
        updates = {"recurrent": args.policy == "meta-rl"}
        if args.unroll is not None:
            if args.unroll < 1:
                parser.error("--unroll must be >= 1")
            updates["unroll"] = args.unroll
        spec = dataclasses.replace(spec, train=dataclasses.replace(train_cfg, **updates))
        result = train_experiment(
            spec, args.out, iterations=args.iterations, seed=args.seed,
            resume=args.resume,
        )
        sys.stdout.write(
            f"checkpoint: {result['checkpoint']}\ncurve: {result['curve']}\n"
        )
        return 0

    if args.command == "evaluate":
        spec = _load_spec(parser, args.experiment)
        try:
            policy = harness.make_policy(spec, "nn", checkpoint=args.checkpoint)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot load checkpoint {args.checkpoint}: {exc}")
        return _evaluate(parser, spec, policy, "nn", args)

    if args.command == "baseline":
        if args.experiment in SENSOR_EXPERIMENTS:
            parser.error(
                "classical guidance is not comparable on sensor-only "
                f"experiments ({', '.join(SENSOR_EXPERIMENTS)})"
            )
        spec = _load_spec(parser, args.experiment)
        policy = harness.make_policy(spec, "drdv")
        return _evaluate(parser, spec, policy, "drdv", args)

    if args.command == "sensor-check":
        sys.stdout.write(
            _sensor_check_radar() if args.experiment == "3" else _sensor_check_lidar()
        )
        return 0

    if args.command == "report":
        try:
            sys.stdout.write(harness.combine_reports(args.inputs, args.format))
        except OSError as exc:
            parser.error(f"cannot read report: {exc}")
        return 0

    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
