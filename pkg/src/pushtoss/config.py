"""Typed INI-style run configuration.

Four sections: [run], [task], [agent], [physics]. Every key is typed and has
a default; unknown sections or keys are errors (fail fast), and physics
overrides are validated against the world invariants before any run starts.
The fully resolved configuration is written next to every run's outputs.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from pushtoss.world import Geometry

TASKS = ("task1", "task2", "task3")
ALGOS = ("sac", "ddpg")

_DEG = math.pi / 180.0


class ConfigError(ValueError):
    """Bad configuration; the message names the offending field."""


def _seed_list(text: str):
    return tuple(int(v) for v in text.replace(",", " ").split())


# (section, key) -> (parser, default). Defaults mirror the paper-scale setup:
# 2x256 ReLU networks, Adam 3e-4, batch 256, buffer 1e6, gamma 0.99, tau 0.005.
_SCHEMA = {
    ("run", "seed"): (int, 1),
    ("run", "total_steps"): (int, 100_000),
    ("run", "warmup_steps"): (int, 1000),
    ("run", "eval_every"): (int, 5000),
    ("run", "eval_snapshot_episodes"): (int, 20),
    ("run", "eval_episodes"): (int, 200),
    ("run", "output_dir"): (str, "runs/run"),
    ("task", "name"): (str, "task2"),
    ("task", "algo"): (str, "sac"),
    ("task", "scenario_seeds"): (_seed_list,
                                 tuple(range(101, 111))),
    ("agent", "learning_rate"): (float, 3e-4),
    ("agent", "batch_size"): (int, 256),
    ("agent", "buffer_capacity"): (int, 10**6),
    ("agent", "gamma"): (float, 0.99),
    ("agent", "tau"): (float, 0.005),
    ("agent", "hidden_layers"): (int, 2),
    ("agent", "hidden_units"): (int, 256),
    ("agent", "noise_std"): (float, 0.1),
    ("agent", "grad_clip"): (float, 10.0),
    ("physics", "workspace_size"): (float, 0.5),
    ("physics", "object_radius_min"): (float, 0.02),
    ("physics", "object_radius_max"): (float, 0.03),
    ("physics", "pusher_radius"): (float, 0.01),
    ("physics", "push_length_min"): (float, 0.02),
    ("physics", "push_length_max"): (float, 0.10),
    ("physics", "push_step"): (float, 0.002),
    ("physics", "basket_radius"): (float, 0.10),
    ("physics", "basket_rim_z"): (float, 0.1),
    ("physics", "link_length"): (float, 0.8),
    ("physics", "shoulder_height"): (float, 0.4),
    ("physics", "arm_reach"): (float, 0.9),
    ("physics", "kernel_j_i_deg"): (float, -45.0),
    ("physics", "kernel_j_f_deg"): (float, 60.0),
    ("physics", "kernel_duration"): (float, 0.6),
    ("physics", "kernel_release_fraction"): (float, 0.45),
    ("physics", "max_pushes"): (int, 5),
}


@dataclass
class RunConfig:
    seed: int
    total_steps: int
    warmup_steps: int
    eval_every: int
    eval_snapshot_episodes: int
    eval_episodes: int
    output_dir: str
    task: str
    algo: str
    scenario_seeds: tuple
    agent: dict
    geometry: Geometry
    raw: dict = field(repr=False, default_factory=dict)


def load_config(path=None, overrides=None) -> RunConfig:
    """Parse an INI file (optional) and CLI overrides into a RunConfig."""
    values = {key: default for key, (_, default) in _SCHEMA.items()}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in {s for s, _ in _SCHEMA}:
                raise ConfigError(f"unknown section '[{section}]' in {path}")
            for key, text in parser.items(section):
                if (section, key) not in _SCHEMA:
                    raise ConfigError(
                        f"unknown key '{key}' in section '[{section}]' of {path}"
                    )
                cast = _SCHEMA[(section, key)][0]
                try:
                    values[(section, key)] = cast(text)
                except ValueError as exc:
                    raise ConfigError(
                        f"bad value for '{key}' in '[{section}]': {text!r} ({exc})"
                    ) from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return _build(values)


def _build(values) -> RunConfig:
    task = values[("task", "name")]
    if task not in TASKS:
        raise ConfigError(f"task name must be one of {TASKS}, got {task!r}")
    algo = values[("task", "algo")]
    if algo not in ALGOS:
        raise ConfigError(f"algo must be one of {ALGOS}, got {algo!r}")
    for key in ("total_steps", "warmup_steps", "eval_every", "eval_episodes",
                "eval_snapshot_episodes"):
        if values[("run", key)] < 1:
            raise ConfigError(f"'{key}' must be >= 1, got {values[('run', key)]}")
    size = values[("physics", "workspace_size")]
    geometry = Geometry(
        workspace=(0.0, 0.0, size, size),
        cell_size=size / Geometry.map_cells,
        object_radius_range=(values[("physics", "object_radius_min")],
                             values[("physics", "object_radius_max")]),
        pusher_radius=values[("physics", "pusher_radius")],
        push_length_range=(values[("physics", "push_length_min")],
                           values[("physics", "push_length_max")]),
        push_step=values[("physics", "push_step")],
        basket_radius=values[("physics", "basket_radius")],
        basket_rim_z=values[("physics", "basket_rim_z")],
        link_length=values[("physics", "link_length")],
        shoulder_height=values[("physics", "shoulder_height")],
        arm_reach=values[("physics", "arm_reach")],
        kernel_j_i=values[("physics", "kernel_j_i_deg")] * _DEG,
        kernel_j_f=values[("physics", "kernel_j_f_deg")] * _DEG,
        kernel_duration=values[("physics", "kernel_duration")],
        kernel_release_fraction=values[("physics", "kernel_release_fraction")],
        max_pushes=values[("physics", "max_pushes")],
    )
    try:
        geometry.validate()
        geometry.kernel()  # kernel invariants (0 < t_r < tau, ...)
    except ValueError as exc:
        raise ConfigError(f"invalid physics configuration: {exc}") from exc
    hidden = tuple([values[("agent", "hidden_units")]]
                   * values[("agent", "hidden_layers")])
    agent = dict(
        learning_rate=values[("agent", "learning_rate")],
        batch_size=values[("agent", "batch_size")],
        buffer_capacity=values[("agent", "buffer_capacity")],
        gamma=values[("agent", "gamma")],
        tau=values[("agent", "tau")],
        hidden=hidden,
        noise_std=values[("agent", "noise_std")],
        grad_clip=values[("agent", "grad_clip")],
    )
    if agent["learning_rate"] <= 0:
        raise ConfigError(f"learning_rate must be > 0, got {agent['learning_rate']}")
    if not 0.0 < agent["tau"] <= 1.0:
        raise ConfigError(f"tau must be in (0, 1], got {agent['tau']}")
    if not 0.0 <= agent["gamma"] <= 1.0:
        raise ConfigError(f"gamma must be in [0, 1], got {agent['gamma']}")
    return RunConfig(
        seed=values[("run", "seed")],
        total_steps=values[("run", "total_steps")],
        warmup_steps=values[("run", "warmup_steps")],
        eval_every=values[("run", "eval_every")],
        eval_snapshot_episodes=values[("run", "eval_snapshot_episodes")],
        eval_episodes=values[("run", "eval_episodes")],
        output_dir=values[("run", "output_dir")],
        task=task,
        algo=algo,
        scenario_seeds=values[("task", "scenario_seeds")],
        agent=agent,
        geometry=geometry,
        raw=dict(values),
    )


def render_resolved(config: RunConfig) -> str:
    """INI text with every default materialized, for run-directory audit."""
    lines = []
    sections = {}
    for (section, key), value in sorted(config.raw.items()):
        sections.setdefault(section, []).append((key, value))
    for section in ("run", "task", "agent", "physics"):
        lines.append(f"[{section}]")
        for key, value in sections.get(section, []):
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def write_resolved(config: RunConfig, directory) -> None:
    Path(directory).mkdir(parents=True, exist_ok=True)
    (Path(directory) / "resolved_config.ini").write_text(render_resolved(config))
