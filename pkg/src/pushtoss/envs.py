"""The two MDPs as reset/step environments.

PushGraspEnv: the agent pushes until the target's grasp quality exceeds the
threshold, at which point a grasp fires automatically within the same step.
ThrowEnv: one residual-throw action per episode. Both follow the contract
reset(seed) -> observation, step(action) -> (observation, reward, terminal,
info), are fully deterministic per (seed, actions), and refuse steps after
the terminal transition.
"""

from __future__ import annotations

import math

import numpy as np

from pushtoss.grasping import (
    ActionChoice,
    decide_action,
    execute_grasp,
    render_quality_map,
    target_mask,
    target_quality,
)
from pushtoss.records import EpisodeRecord
from pushtoss.world import (
    Geometry,
    PushCommand,
    ThrowKernel,
    apply_push,
    generate_scene,
    simulate_throw,
    target_out_of_workspace,
)

PUSH_OBS_DIM = 2511  # 50*50 map + 11 supplementary values
THROW_OBS_DIM = 10
ACTION_DIM = 4

REWARD_USELESS = -0.1
REWARD_GRASP = 1.0
SHAPING_ALPHA = 0.9


def shaped_push_reward(beta_after: float, alpha: float = SHAPING_ALPHA) -> float:
    """Improvement reward: alpha*exp(-d^2/0.001) + (1-alpha)*exp(-d^2/0.05),
    with d = 1 - beta. Equals 1.0 exactly at beta = 1."""
    d = 1.0 - beta_after
    return alpha * math.exp(-(d * d) / 0.001) + (1.0 - alpha) * math.exp(-(d * d) / 0.05)


def decode_push_action(action, geometry: Geometry) -> PushCommand:
    """[-1,1]^4 -> (start x, start y, direction, length); z is the fixed
    pusher plane. Components are clamped."""
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if a.shape != (ACTION_DIM,):
        raise ValueError(f"push action must have shape (4,), got {a.shape}")
    x0, y0, x1, y1 = geometry.workspace
    lmin, lmax = geometry.push_length_range
    theta = (math.pi * (a[2] + 1.0)) % (2.0 * math.pi)
    return PushCommand(
        start=(
            x0 + (a[0] + 1.0) / 2.0 * (x1 - x0),
            y0 + (a[1] + 1.0) / 2.0 * (y1 - y0),
            geometry.pusher_plane_z,
        ),
        direction=theta,
        length=lmin + (a[3] + 1.0) / 2.0 * (lmax - lmin),
    )


def decode_throw_action(action, geometry: Geometry) -> ThrowKernel:
    """Residual-centred decode around the taught kernel; a = 0 reproduces it.

    Joint endpoints move by up to +/-30 deg, the duration by +/-0.3 s
    (clamped), and the release fraction by +/-0.40 (clamped to (0, 1)), so
    t_r < tau holds structurally.
    """
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if a.shape != (ACTION_DIM,):
        raise ValueError(f"throw action must have shape (4,), got {a.shape}")
    k = geometry.kernel()
    j_i = k.j_i + float(a[0]) * geometry.residual_joint_range
    j_f = k.j_f + float(a[1]) * geometry.residual_joint_range
    tau = float(np.clip(k.tau_dur + float(a[2]) * geometry.residual_duration_range,
                        *geometry.duration_clamp))
    frac0 = k.t_r / k.tau_dur
    frac = float(np.clip(frac0 + float(a[3]) * geometry.residual_release_range,
                         *geometry.release_fraction_clamp))
    return ThrowKernel(j_i=j_i, j_f=j_f, tau_dur=tau, t_r=frac * tau,
                       link_length=k.link_length)


def throw_observation(kernel: ThrowKernel, basket, dist=(0.0, 0.0, 0.0)) -> np.ndarray:
    """(proprio, goal, dist, time) vector in R^10."""
    return np.array([
        kernel.j_i, kernel.j_f,
        basket.x, basket.y, basket.z,
        dist[0], dist[1], dist[2],
        kernel.t_r, kernel.tau_dur,
    ])


class EpisodeTerminalError(RuntimeError):
    """step() called after the episode already terminated."""


class PushGraspEnv:
    """Singulate-then-grasp MDP (front half of tasks 1 and 3)."""

    observation_dim = PUSH_OBS_DIM
    action_dim = ACTION_DIM

    def __init__(self, task: str = "task1", geometry: Geometry | None = None):
        if task not in ("task1", "task3"):
            raise ValueError(f"PushGraspEnv supports task1/task3, got {task!r}")
        self.task = task
        self.geometry = geometry or Geometry()
        self.scene = None
        self.terminal = True

    def clone(self) -> "PushGraspEnv":
        return PushGraspEnv(self.task, self.geometry)

    def reset(self, seed) -> np.ndarray:
        self.scene = generate_scene(self.task, seed, self.geometry)
        self.qmap = render_quality_map(self.scene, self.geometry)
        self.mask = target_mask(self.scene, self.geometry)
        self.beta = target_quality(self.qmap, self.mask)
        self.push_count = 0
        self.terminal = False
        return self._observation(np.zeros(5), self.scene.target,
                                 beta_initial=self.beta, beta_after=0.0,
                                 beta_delta=0.0)

    def step(self, action):
        if self.terminal:
            raise EpisodeTerminalError("push-grasp episode is terminal; reset first")
        geom = self.geometry
        cmd = decode_push_action(action, geom)
        self.scene = apply_push(self.scene, cmd, geom)
        self.push_count += 1
        self.qmap = render_quality_map(self.scene, geom)
        self.mask = target_mask(self.scene, geom)
        beta_before = self.beta
        beta_after = target_quality(self.qmap, self.mask)
        target = self.scene.target  # captured before a grasp removes it
        success = False
        if target_out_of_workspace(self.scene):
            reward = REWARD_USELESS
            self.terminal = True
        elif decide_action(beta_after, geom.grasp_threshold) is ActionChoice.GRASP:
            success, self.scene = execute_grasp(self.scene, self.qmap, self.mask,
                                                geom.grasp_threshold)
            # the deterministic grasp rule cannot fail here; guarded anyway
            reward = REWARD_GRASP if success else REWARD_USELESS
            self.terminal = True
        else:
            if beta_after > beta_before:
                reward = shaped_push_reward(beta_after)
            else:
                reward = REWARD_USELESS
            if self.push_count >= geom.max_pushes:
                self.terminal = True
        self.beta = beta_after
        x0, y0, x1, y1 = geom.workspace
        cmd_norm = np.array([
            (cmd.start[0] - x0) / (x1 - x0),
            (cmd.start[1] - y0) / (y1 - y0),
            0.0,  # pusher plane height: one fixed z in this world
            cmd.direction / (2.0 * math.pi),
            (cmd.length - geom.push_length_range[0])
            / (geom.push_length_range[1] - geom.push_length_range[0]),
        ])
        obs = self._observation(cmd_norm, target, beta_initial=beta_before,
                                beta_after=beta_after,
                                beta_delta=beta_after - beta_before)
        info = {
            "push_count": self.push_count,
            "beta": beta_after,
            "success": success,
            "landing_distance": None,
        }
        return obs, reward, self.terminal, info

    def _observation(self, cmd_norm, target, beta_initial, beta_after, beta_delta):
        x0, y0, x1, y1 = self.geometry.workspace
        tail = np.array([
            (target.x - x0) / (x1 - x0),
            (target.y - y0) / (y1 - y0),
            0.0,
            beta_initial,
            beta_after,
            beta_delta,
        ])
        return np.concatenate([self.qmap.flat(), cmd_norm, tail])


class ThrowEnv:
    """Single-decision residual-throw MDP (task 2)."""

    observation_dim = THROW_OBS_DIM
    action_dim = ACTION_DIM

    def __init__(self, geometry: Geometry | None = None):
        self.geometry = geometry or Geometry()
        self.scene = None
        self.terminal = True

    def clone(self) -> "ThrowEnv":
        return ThrowEnv(self.geometry)

    def reset(self, seed) -> np.ndarray:
        self.scene = generate_scene("task2", seed, self.geometry)
        self.terminal = False
        return throw_observation(self.geometry.kernel(), self.scene.basket)

    def step(self, action):
        if self.terminal:
            raise EpisodeTerminalError("throw episode is terminal; reset first")
        kernel = decode_throw_action(action, self.geometry)
        flight = simulate_throw(self.scene, kernel)
        reward = 1.0 if flight.in_basket else -flight.distance_to_goal
        self.terminal = True
        obs = throw_observation(
            kernel, self.scene.basket,
            dist=(flight.distance_to_goal, flight.dx, flight.dy),
        )
        info = {
            "push_count": 0,
            "beta": None,
            "success": flight.in_basket,
            "landing_distance": flight.distance_to_goal,
        }
        return obs, reward, self.terminal, info


def task3_episode(push_policy, throw_policy, seed,
                  geometry: Geometry | None = None,
                  episode_id: int = 0) -> EpisodeRecord:
    """Run singulation, then (on grasp success) one throw at the far basket."""
    geom = geometry or Geometry()
    env = PushGraspEnv("task3", geom)
    obs = env.reset(seed)
    total = 0.0
    info = {"success": False, "push_count": 0}
    terminal = False
    while not terminal:
        obs, reward, terminal, info = env.step(push_policy(obs))
        total += reward
    grasped = info["success"]
    landing = None
    success = False
    if grasped:
        tobs = throw_observation(geom.kernel(), env.scene.basket)
        kernel = decode_throw_action(throw_policy(tobs), geom)
        flight = simulate_throw(env.scene, kernel)
        landing = flight.distance_to_goal
        success = flight.in_basket
        total += 1.0 if flight.in_basket else -flight.distance_to_goal
    return EpisodeRecord(
        episode_id=episode_id,
        success=success,
        n_actions=info["push_count"] + (1 if grasped else 0),
        landing_distance=landing,
        total_reward=total,
        seed=int(seed),
    )
