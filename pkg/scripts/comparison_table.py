#!/usr/bin/env python3
"""Report SAC vs DDPG success rates and action counts for tasks 1-3.

Evaluates the promoted acceptance checkpoints side by side (200 episodes for
task 2, 100 for tasks 1 and 3, fixed evaluation seeds) and prints a table in
the layout of the paper-style comparison. Writes comparison.json next to the
checkpoints.

Usage: python3 scripts/comparison_table.py [--episodes-scale 1.0]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))
sys.path.insert(0, str(REPO / "scripts"))

from pushtoss.config import load_config  # noqa: E402
from pushtoss.harness import run_eval, run_task3  # noqa: E402

from train_acceptance_agents import EVAL_SEED_BASE, train_component  # noqa: E402


def evaluate_algo(algo: str, scale: float, out_root: Path):
    throw_ckpt = train_component(f"task2_{algo}")
    push_ckpt = train_component(f"task1_{algo}")
    results = {}
    for task, ckpt, n in (("task1", push_ckpt, 100), ("task2", throw_ckpt, 200)):
        config = load_config(None, {
            ("run", "seed"): EVAL_SEED_BASE,
            ("run", "output_dir"): str(out_root / f"{algo}_{task}"),
            ("task", "name"): task,
            ("task", "algo"): algo,
        })
        _, summary = run_eval(config, ckpt, n_episodes=max(1, int(n * scale)))
        results[task] = summary
    config = load_config(None, {
        ("run", "seed"): EVAL_SEED_BASE,
        ("run", "output_dir"): str(out_root / f"{algo}_task3"),
        ("task", "name"): "task3",
        ("task", "algo"): algo,
    })
    _, summary, phases = run_task3(config, push_ckpt, throw_ckpt,
                                   n_episodes=max(1, int(100 * scale)))
    results["task3"] = summary
    results["task3_phases"] = phases
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes-scale", type=float, default=1.0,
                        help="scale the episode counts (for quick previews)")
    args = parser.parse_args()
    out_root = REPO / "artifacts" / "comparison"
    table = {algo: evaluate_algo(algo, args.episodes_scale, out_root)
             for algo in ("sac", "ddpg")}
    print()
    print(f"{'Task':8s} | {'Success Rate % (up)':^25s} | "
          f"{'Avg. Number of Actions (down)':^31s}")
    print(f"{'':8s} | {'SAC':>11s} | {'DDPG':>11s} | {'SAC':>14s} | {'DDPG':>14s}")
    for task in ("task1", "task2", "task3"):
        s, d = table["sac"][task], table["ddpg"][task]
        print(f"{task:8s} | {s.success_rate:11.1f} | {d.success_rate:11.1f} | "
              f"{s.mean_actions:14.2f} | {d.mean_actions:14.2f}")
    print()
    for algo in ("sac", "ddpg"):
        ph = table[algo]["task3_phases"]
        print(f"task3 {algo}: singulation {ph['singulation_success_rate']:.1f}%, "
              f"throw|grasp {ph['throw_success_given_grasp']:.1f}%, "
              f"{ph['mean_pushes']:.2f} pushes/episode")
    doc = {
        algo: {
            task: {
                "success_rate": table[algo][task].success_rate,
                "mean_actions": table[algo][task].mean_actions,
                "std_actions": table[algo][task].std_actions,
                "n_episodes": table[algo][task].n_episodes,
            }
            for task in ("task1", "task2", "task3")
        } | {"task3_phases": table[algo]["task3_phases"]}
        for algo in ("sac", "ddpg")
    }
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "comparison.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(f"\nwritten to {out_root / 'comparison.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
