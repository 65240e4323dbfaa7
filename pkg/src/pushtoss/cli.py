"""Command-line front end.

Subcommands: train, eval, task3, oracle-throw, replay. Exit codes: 0 on
success, 2 for configuration/usage errors, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from pushtoss.config import ConfigError, load_config
from pushtoss.harness import (
    replay_trace,
    run_eval,
    run_task3,
    run_throw_oracle,
    run_training,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pushtoss",
        description="Planar push-grasp-throw training and evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, episodes=False):
        p.add_argument("--config", type=Path, default=None,
                       help="INI config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--out", type=Path, default=None,
                       help="override [run] output_dir")
        if checkpoint:
            p.add_argument("--checkpoint", type=Path, required=True,
                           help="agent checkpoint directory")
        if episodes:
            p.add_argument("--episodes", type=int, default=None,
                           help="override [run] eval_episodes")

    p_train = sub.add_parser("train", help="train an agent on the configured task")
    common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    common(p_eval, checkpoint=True, episodes=True)
    p_eval.add_argument("--debug-dumps", action="store_true",
                        help="write per-episode JSONL traces")
    p_eval.add_argument("--scenario-suite", action="store_true",
                        help="use the 10 published scenario seeds instead of "
                             "seed..seed+n-1")

    p_task3 = sub.add_parser("task3", help="run the composed push->grasp->throw "
                                           "pipeline")
    common(p_task3, episodes=True)
    p_task3.add_argument("--push-checkpoint", type=Path, required=True)
    p_task3.add_argument("--throw-checkpoint", type=Path, required=True)

    p_oracle = sub.add_parser("oracle-throw", help="grid-search throw feasibility "
                                                   "over the goal annulus")
    common(p_oracle)
    p_oracle.add_argument("--grid", type=int, default=21,
                          help="grid resolution per action dimension")

    p_replay = sub.add_parser("replay", help="narrate an episode trace")
    p_replay.add_argument("trace", type=Path)
    p_replay.add_argument("--config", type=Path, default=None)
    p_replay.add_argument("--out", type=Path, default=None,
                          help="directory for debug artifacts")
    p_replay.add_argument("--debug-dumps", action="store_true",
                          help="re-run the episode and dump maps/trajectories")
    return parser


def _config_from(args) -> "RunConfig":
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides[("run", "seed")] = args.seed
    if getattr(args, "out", None) is not None:
        overrides[("run", "output_dir")] = str(args.out)
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            config = _config_from(args)
            ckpt, curve = run_training(
                config,
                progress=lambda p: print(
                    f"step {p.env_step}: eval success {p.eval_success_rate:.1f}% "
                    f"mean reward {p.eval_mean_reward:+.3f}", flush=True),
            )
            print(f"checkpoint written to {ckpt}")
        elif args.command == "eval":
            config = _config_from(args)
            records, summary = run_eval(
                config, args.checkpoint, n_episodes=args.episodes,
                out_dir=args.out, debug_dumps=args.debug_dumps,
                scenario_suite=args.scenario_suite,
            )
            print(f"{summary.n_episodes} episodes: success rate "
                  f"{summary.success_rate:.1f}%, actions "
                  f"{summary.mean_actions:.2f} +/- {summary.std_actions:.2f}")
        elif args.command == "task3":
            config = _config_from(args)
            records, summary, phases = run_task3(
                config, args.push_checkpoint, args.throw_checkpoint,
                n_episodes=args.episodes, out_dir=args.out,
            )
            print(f"{summary.n_episodes} episodes: end-to-end success "
                  f"{summary.success_rate:.1f}% (singulation "
                  f"{phases['singulation_success_rate']:.1f}%, throw|grasp "
                  f"{phases['throw_success_given_grasp']:.1f}%), mean pushes "
                  f"{phases['mean_pushes']:.2f}")
        elif args.command == "oracle-throw":
            config = _config_from(args)
            rows = run_throw_oracle(config, grid_resolution=args.grid,
                                    out_dir=args.out or config.output_dir)
            feasible = sum(1 for r in rows if r["feasible"])
            for r in rows:
                print(f"goal ({r['goal_x']:+.3f}, {r['goal_y']:+.3f}) "
                      f"range {r['goal_range']:.3f}: best "
                      f"{r['best_distance']:.4f} m "
                      f"{'FEASIBLE' if r['feasible'] else 'INFEASIBLE'} "
                      f"({r['n_in_basket']} hits)")
            print(f"{feasible}/{len(rows)} goals feasible")
            if feasible < len(rows):
                return EXIT_RUNTIME
        elif args.command == "replay":
            config = _config_from(args) if args.config else None
            replay_trace(args.trace,
                         config=config,
                         debug_dir=args.out if args.debug_dumps else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
