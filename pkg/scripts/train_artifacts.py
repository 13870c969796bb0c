#!/usr/bin/env python3
"""Train the committed policy checkpoints the slow acceptance tests evaluate.

Three runs, each within the standard 100-iteration x 30-episode budget:

  artifacts/c6/nominal-mars.ckpt   adaptive policy, nominal Mars randomization
  artifacts/c7-meta/exp1-hard.ckpt adaptive policy, hard engine-failure runs
  artifacts/c7-mlp/exp1-hard.ckpt  reactive (non-recurrent) policy, same runs

Everything is deterministic in the seed, so re-running this script
reproduces the checkpoints bit for bit.
"""

import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from descentlab.cli import main  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parents[1]

RUNS = [
    ("nominal-mars", "meta-rl", ROOT / "artifacts" / "c6"),
    ("exp1-hard", "meta-rl", ROOT / "artifacts" / "c7-meta"),
    ("exp1-hard", "rl", ROOT / "artifacts" / "c7-mlp"),
]


def run_all(seed=0):
    for experiment, policy, out in RUNS:
        out.mkdir(parents=True, exist_ok=True)
        start = time.time()
        print(f"== train {experiment} policy={policy} -> {out}", flush=True)
        rc = main([
            "train",
            "--experiment", experiment,
            "--policy", policy,
            "--seed", str(seed),
            "--out", str(out),
        ])
        if rc != 0:
            raise SystemExit(rc)
        print(f"== done in {time.time() - start:.0f}s", flush=True)


if __name__ == "__main__":
    run_all(seed=int(sys.argv[1]) if len(sys.argv) > 1 else 0)
