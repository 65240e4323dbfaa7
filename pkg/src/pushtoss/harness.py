"""Run orchestration: training, evaluation, task-3 composition, the throw
feasibility oracle, and trace replay.

Every entry point takes a RunConfig, writes its artifacts under an output
directory (learning_curve.csv / metrics.csv / summary.json / resolved
config), and returns the in-memory results. File contents are byte-stable
for identical (config, seed).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from pushtoss.agents import DDPGAgent, ReplayBuffer, SACAgent, load_agent, train
from pushtoss.config import ConfigError, RunConfig, write_resolved
from pushtoss.envs import (
    PushGraspEnv,
    ThrowEnv,
    decode_throw_action,
    task3_episode,
    throw_observation,
)
from pushtoss.grasping import write_map_pgm
from pushtoss.records import EpisodeRecord, summarize, write_metrics_csv
from pushtoss.world import Geometry, ballistic_landing, swing_state, write_trajectory_csv

CURVE_HEADER = ("env_step,eval_success_rate,eval_mean_reward,eval_mean_actions,"
                "critic_loss,actor_loss,entropy_coef")


def make_env(config: RunConfig):
    if config.task == "task2":
        return ThrowEnv(config.geometry)
    return PushGraspEnv(config.task, config.geometry)


def make_agent(config: RunConfig, env):
    cls = SACAgent if config.algo == "sac" else DDPGAgent
    return cls(env.observation_dim, env.action_dim, seed=config.seed,
               **config.agent)


def write_learning_curve(curve, path) -> None:
    lines = [CURVE_HEADER]
    for p in curve:
        coef = "" if p.entropy_coef is None else repr(float(p.entropy_coef))
        lines.append(",".join([
            str(p.env_step),
            repr(float(p.eval_success_rate)),
            repr(float(p.eval_mean_reward)),
            repr(float(p.eval_mean_actions)),
            repr(float(p.critic_loss)),
            repr(float(p.actor_loss)),
            coef,
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def run_training(config: RunConfig, progress=None):
    """Train per config; writes checkpoint/, learning_curve.csv, resolved config."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(config, out)
    env = make_env(config)
    agent = make_agent(config, env)
    agent, curve = train(
        env,
        agent,
        total_steps=config.total_steps,
        warmup=config.warmup_steps,
        seed=config.seed,
        eval_every=config.eval_every,
        eval_episodes=config.eval_snapshot_episodes,
        buffer=ReplayBuffer(config.agent["buffer_capacity"]),
        progress=progress,
    )
    write_learning_curve(curve, out / "learning_curve.csv")
    agent.save(out / "checkpoint")
    return out / "checkpoint", curve


def _deterministic_policy(agent):
    return lambda obs: agent.select_action(obs, deterministic=True)


def run_eval(config: RunConfig, checkpoint, n_episodes=None, out_dir=None,
             debug_dumps: bool = False, scenario_suite: bool = False):
    """Deterministic-policy evaluation; writes metrics.csv and summary.json.

    Episode seeds are seed..seed+n-1, or the config's published scenario
    seeds with scenario_suite=True.
    """
    agent = load_agent(checkpoint)
    env = make_env(config)
    if agent.obs_dim != env.observation_dim:
        raise ConfigError(
            f"checkpoint observes {agent.obs_dim} dims but task "
            f"'{config.task}' emits {env.observation_dim}"
        )
    n = config.eval_episodes if n_episodes is None else n_episodes
    if n < 1:
        raise ConfigError(f"eval_episodes must be >= 1, got {n}")
    seeds = list(config.scenario_seeds) if scenario_suite \
        else [config.seed + i for i in range(n)]
    out = Path(out_dir) if out_dir else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(config, out)
    policy = _deterministic_policy(agent)
    records = []
    for i, seed in enumerate(seeds):
        records.append(_run_episode(env, policy, seed, i, config,
                                    out if debug_dumps else None))
    summary = summarize(records)
    write_metrics_csv(records, out / "metrics.csv")
    _write_summary(out / "summary.json", config, summary)
    return records, summary


def _run_episode(env, policy, seed, episode_id, config, dump_dir):
    obs = env.reset(int(seed))
    total = 0.0
    terminal = False
    steps = []
    info = {}
    while not terminal:
        action = policy(obs)
        obs, reward, terminal, info = env.step(action)
        steps.append({
            "step": len(steps),
            "action": [float(a) for a in np.clip(action, -1.0, 1.0)],
            "reward": float(reward),
            "beta": None if info["beta"] is None else float(info["beta"]),
            "terminal": bool(terminal),
        })
        total += reward
    steps[-1]["total_reward"] = float(total)
    if dump_dir is not None:
        trace_dir = Path(dump_dir) / "traces"
        trace_dir.mkdir(parents=True, exist_ok=True)
        write_trace(trace_dir / f"episode_{episode_id:05d}.jsonl",
                    steps, seed=int(seed), task=config.task, algo=config.algo)
    success = bool(info["success"])
    if info["push_count"]:
        n_actions = info["push_count"] + (1 if success else 0)
    else:
        n_actions = 1
    return EpisodeRecord(
        episode_id=episode_id,
        success=success,
        n_actions=n_actions,
        landing_distance=info["landing_distance"],
        total_reward=float(total),
        seed=int(seed),
    )


def run_task3(config: RunConfig, push_checkpoint, throw_checkpoint,
              n_episodes=None, out_dir=None):
    """Composed pipeline: trained push-grasp policy, then trained throw policy."""
    push_agent = load_agent(push_checkpoint)
    throw_agent = load_agent(throw_checkpoint)
    probe_push = PushGraspEnv("task3", config.geometry)
    probe_throw = ThrowEnv(config.geometry)
    if push_agent.obs_dim != probe_push.observation_dim:
        raise ConfigError(
            f"push checkpoint observes {push_agent.obs_dim} dims, task3 "
            f"singulation emits {probe_push.observation_dim}"
        )
    if throw_agent.obs_dim != probe_throw.observation_dim:
        raise ConfigError(
            f"throw checkpoint observes {throw_agent.obs_dim} dims, the throw "
            f"phase emits {probe_throw.observation_dim}"
        )
    n = config.eval_episodes if n_episodes is None else n_episodes
    if n < 1:
        raise ConfigError(f"eval_episodes must be >= 1, got {n}")
    out = Path(out_dir) if out_dir else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(config, out)
    push_policy = _deterministic_policy(push_agent)
    throw_policy = _deterministic_policy(throw_agent)
    records = []
    grasped = 0
    thrown_in = 0
    pushes = 0
    for i in range(n):
        rec = task3_episode(push_policy, throw_policy, config.seed + i,
                            config.geometry, episode_id=i)
        records.append(rec)
        if rec.landing_distance is not None:
            grasped += 1
            thrown_in += int(rec.success)
            pushes += rec.n_actions - 1
        else:
            pushes += rec.n_actions
    summary = summarize(records)
    write_metrics_csv(records, out / "metrics.csv")
    phases = {
        "singulation_success_rate": 100.0 * grasped / n,
        "throw_success_given_grasp": (100.0 * thrown_in / grasped) if grasped else 0.0,
        "mean_pushes": pushes / n,
    }
    _write_summary(out / "summary.json", config, summary, phases=phases)
    return records, summary, phases


def run_throw_oracle(config: RunConfig, grid_resolution: int = 21,
                     goal_grid: int = 5, out_dir=None):
    """Exhaustive residual-action grid against goals spanning the sampling
    annulus; reports per-goal best landing distance and feasibility.

    Deterministic (no RNG); the grid itself is the feasibility oracle that
    gates the kernel constants before any training.
    """
    geom = config.geometry
    kern = geom.kernel()
    lo, hi = (geom.basket_range_task2 if config.task == "task2"
              else geom.basket_range_task3)
    axis = np.linspace(-1.0, 1.0, grid_resolution)
    a0, a1, a2, a3 = np.meshgrid(axis, axis, axis, axis, indexing="ij")
    a0, a1, a2, a3 = (v.ravel() for v in (a0, a1, a2, a3))
    j_i = kern.j_i + a0 * geom.residual_joint_range
    j_f = kern.j_f + a1 * geom.residual_joint_range
    tau = np.clip(kern.tau_dur + a2 * geom.residual_duration_range,
                  *geom.duration_clamp)
    frac = np.clip(kern.t_r / kern.tau_dur + a3 * geom.residual_release_range,
                   *geom.release_fraction_clamp)
    j, omega = swing_state(j_i, j_f, tau, frac * tau)
    ll = geom.link_length
    pos = np.stack([ll * np.cos(j), np.zeros_like(j),
                    geom.shoulder_height + ll * np.sin(j)], axis=-1)
    vel = np.stack([-ll * omega * np.sin(j), np.zeros_like(j),
                    ll * omega * np.cos(j)], axis=-1)
    _, land, rim = ballistic_landing(pos, vel, plane_z=geom.basket_rim_z)
    ranges = land[:, 0]

    rows = []
    bx, by = geom.arm_base
    for goal_range in np.linspace(lo, hi, goal_grid) * geom.arm_reach:
        for azimuth in np.linspace(-geom.basket_azimuth_limit,
                                   geom.basket_azimuth_limit, goal_grid):
            ux, uy = math.sin(azimuth), math.cos(azimuth)
            gx, gy = bx + goal_range * ux, by + goal_range * uy
            dist = np.hypot(bx + ranges * ux - gx, by + ranges * uy - gy)
            dist = np.where(rim, dist, np.inf)
            best = float(dist.min())
            rows.append({
                "goal_x": gx,
                "goal_y": gy,
                "goal_range": float(goal_range),
                "azimuth": float(azimuth),
                "best_distance": best,
                "feasible": bool(best <= geom.basket_radius),
                "n_in_basket": int((dist <= geom.basket_radius).sum()),
            })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_resolved(config, out)
        lines = ["goal_x,goal_y,goal_range,azimuth,best_distance,feasible,n_in_basket"]
        for r in rows:
            lines.append(",".join([
                repr(float(r["goal_x"])), repr(float(r["goal_y"])),
                repr(float(r["goal_range"])), repr(float(r["azimuth"])),
                repr(float(r["best_distance"])), str(int(r["feasible"])),
                str(r["n_in_basket"]),
            ]))
        (out / "feasibility.csv").write_text("\n".join(lines) + "\n")
        (out / "feasibility.json").write_text(
            json.dumps({"grid_resolution": grid_resolution, "goals": rows},
                       sort_keys=True, indent=2) + "\n")
    return rows


# -- traces -------------------------------------------------------------------


def write_trace(path, steps, seed: int, task: str, algo: str) -> None:
    """JSON-lines episode trace: one meta line, then one step per line."""
    lines = [json.dumps({"meta": {"seed": seed, "task": task, "algo": algo}},
                        sort_keys=True)]
    for step in steps:
        lines.append(json.dumps(step, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def replay_trace(path, config: RunConfig | None = None, debug_dir=None,
                 out=print):
    """Narrate a trace; with debug_dir, re-run the episode and dump artifacts.

    Raises ValueError naming the line number on malformed input.
    """
    lines = Path(path).read_text().splitlines()
    meta = None
    steps = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed trace line {lineno}: {exc}") from exc
        if "meta" in doc:
            meta = doc["meta"]
            continue
        for field in ("step", "action", "reward", "terminal"):
            if field not in doc:
                raise ValueError(f"malformed trace line {lineno}: missing '{field}'")
        steps.append(doc)
    if meta is not None:
        out(f"episode: task={meta['task']} algo={meta['algo']} seed={meta['seed']}")
    for doc in steps:
        beta = "-" if doc.get("beta") is None else f"{doc['beta']:.4f}"
        action = " ".join(f"{a:+.3f}" for a in doc["action"])
        out(f"step {doc['step']}: action [{action}]  reward {doc['reward']:+.4f}  "
            f"beta {beta}  terminal {doc['terminal']}")
    if steps:
        total = sum(d["reward"] for d in steps)
        recorded = steps[-1].get("total_reward")
        suffix = ""
        if recorded is not None and abs(recorded - total) > 1e-9:
            suffix = f"  (MISMATCH: recorded {recorded!r})"
        out(f"total reward {total:+.4f}{suffix}")
    if debug_dir is not None and meta is not None and steps:
        _dump_replay_artifacts(meta, steps, Path(debug_dir), config)
    return steps


def _dump_replay_artifacts(meta, steps, debug_dir, config):
    """Re-run the deterministic episode and write per-step debug dumps."""
    geom = config.geometry if config is not None else Geometry()
    debug_dir.mkdir(parents=True, exist_ok=True)
    if meta["task"] in ("task1", "task3"):
        env = PushGraspEnv(meta["task"], geom)
        env.reset(meta["seed"])
        write_map_pgm(env.qmap, debug_dir / "map_step_00.pgm")
        for k, doc in enumerate(steps, start=1):
            env.step(np.array(doc["action"]))
            write_map_pgm(env.qmap, debug_dir / f"map_step_{k:02d}.pgm")
            if env.terminal:
                break
    else:
        env = ThrowEnv(geom)
        env.reset(meta["seed"])
        kernel = decode_throw_action(np.array(steps[0]["action"]), geom)
        write_trajectory_csv(env.scene, kernel, debug_dir / "trajectory.csv")


def _write_summary(path, config: RunConfig, summary, phases=None) -> None:
    doc = {
        "task": config.task,
        "algo": config.algo,
        "seed": config.seed,
        "n_episodes": summary.n_episodes,
        "success_rate": summary.success_rate,
        "mean_actions": summary.mean_actions,
        "std_actions": summary.std_actions,
    }
    if phases:
        doc.update(phases)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
