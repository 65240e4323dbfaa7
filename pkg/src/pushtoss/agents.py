"""From-scratch SAC and DDPG over the hand-rolled MLP substrate.

Both agents follow the same off-policy recipe: a FIFO replay ring, twin (SAC)
or single (DDPG) critics regressed to a Bellman target built from target
networks, polyak target tracking after every gradient step, and Adam on every
parameter vector. Updates are batched through the network layer; gradients of
mean losses are formed by scaling per-row output gradients with 1/n.

Training is single-threaded and fully deterministic: all randomness flows
from named generator streams spawned off the caller's seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pushtoss.nets import MLP, adam_init, adam_step, init_mlp, load_network, save_network

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)

DEFAULTS = dict(
    hidden=(256, 256),
    learning_rate=3e-4,
    gamma=0.99,
    tau=0.005,
    batch_size=256,
    buffer_capacity=10**6,
    grad_clip=10.0,
    noise_std=0.1,  # DDPG exploration
)


class ReplayBuffer:
    """FIFO ring of transitions; storage grows geometrically up to capacity."""

    def __init__(self, capacity: int = 10**6, initial_allocation: int = 4096):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._initial = max(1, min(initial_allocation, self.capacity))
        self.size = 0
        self.cursor = 0
        self._states = None

    def __len__(self):
        return self.size

    def store(self, state, action, reward, next_state, terminal) -> None:
        s = np.asarray(state, dtype=np.float32)
        a = np.asarray(action, dtype=np.float64)
        s2 = np.asarray(next_state, dtype=np.float32)
        if self._states is None:
            self._allocate(self._initial, s.shape[0], a.shape[0])
        if s.shape[0] != self._states.shape[1] or s2.shape[0] != self._states.shape[1]:
            raise ValueError(
                f"state dim {s.shape[0]}/{s2.shape[0]} does not match buffer "
                f"dim {self._states.shape[1]}"
            )
        if a.shape[0] != self._actions.shape[1]:
            raise ValueError(
                f"action dim {a.shape[0]} does not match buffer dim "
                f"{self._actions.shape[1]}"
            )
        if self.cursor >= self._states.shape[0] and self._states.shape[0] < self.capacity:
            self._allocate(min(self.capacity, 2 * self._states.shape[0]),
                           self._states.shape[1], self._actions.shape[1])
        i = self.cursor
        self._states[i] = s
        self._actions[i] = a
        self._rewards[i] = reward
        self._next_states[i] = s2
        self._terminals[i] = 1.0 if terminal else 0.0
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _allocate(self, n, state_dim, act_dim):
        def grow(old, shape, dtype):
            arr = np.zeros(shape, dtype=dtype)
            if old is not None:
                arr[: old.shape[0]] = old
            return arr

        self._states = grow(self._states, (n, state_dim), np.float32)
        self._actions = grow(getattr(self, "_actions", None), (n, act_dim), np.float64)
        self._rewards = grow(getattr(self, "_rewards", None), (n,), np.float64)
        self._next_states = grow(getattr(self, "_next_states", None),
                                 (n, state_dim), np.float32)
        self._terminals = grow(getattr(self, "_terminals", None), (n,), np.float64)

    def sample(self, n, rng):
        """n uniform-with-replacement transitions drawn from rng."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if n > self.size:
            raise ValueError(f"requested {n} samples from a buffer of size {self.size}")
        idx = rng.integers(0, self.size, size=n)
        return (
            self._states[idx].astype(np.float64),
            self._actions[idx].copy(),
            self._rewards[idx].copy(),
            self._next_states[idx].astype(np.float64),
            self._terminals[idx].copy(),
        )


def _clip_grad_norm(grads: np.ndarray, max_norm: float) -> np.ndarray:
    norm = math.sqrt(float(grads @ grads))
    if norm > max_norm:
        grads *= max_norm / norm
    return grads


def _squash_correction(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), computed stably as 2*(log 2 - u - softplus(-2u))."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


class SACAgent:
    """Soft actor-critic with twin critics and auto-tuned entropy coefficient."""

    algo = "sac"

    def __init__(self, obs_dim: int, act_dim: int, seed: int = 0, **overrides):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.hp = dict(DEFAULTS)
        self.hp.update(overrides)
        self.seed = int(seed)
        self.gamma = self.hp["gamma"]
        self.tau = self.hp["tau"]
        self.batch_size = self.hp["batch_size"]
        self.grad_clip = self.hp["grad_clip"]
        self.target_entropy = self.hp.get("target_entropy", -float(act_dim))
        hidden = list(self.hp["hidden"])
        lr = self.hp["learning_rate"]
        actor_ss, q1_ss, q2_ss, rng_ss = np.random.SeedSequence(self.seed).spawn(4)
        self.actor = init_mlp([obs_dim, *hidden, 2 * act_dim], actor_ss)
        self.q1 = init_mlp([obs_dim + act_dim, *hidden, 1], q1_ss)
        self.q2 = init_mlp([obs_dim + act_dim, *hidden, 1], q2_ss)
        self.q1_target = self.q1.clone()
        self.q2_target = self.q2.clone()
        self.adam = {
            "actor": adam_init(self.actor.n_params, lr),
            "q1": adam_init(self.q1.n_params, lr),
            "q2": adam_init(self.q2.n_params, lr),
            "alpha": adam_init(1, lr),
        }
        self.log_alpha = np.zeros(1)
        self.rng = np.random.default_rng(rng_ss)

    @property
    def entropy_coef(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def _policy_params(self, obs):
        out = self.actor.forward(obs)
        if not np.isfinite(out).all():
            raise RuntimeError("actor produced a non-finite output")
        mean = out[..., : self.act_dim]
        log_std = np.clip(out[..., self.act_dim:], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def select_action(self, obs, deterministic: bool = False) -> np.ndarray:
        mean, log_std = self._policy_params(obs)
        if deterministic:
            return np.tanh(mean)
        u = mean + np.exp(log_std) * self.rng.standard_normal(self.act_dim)
        return np.tanh(u)

    def update(self, batch) -> dict:
        s, a, r, s2, done = batch
        n = s.shape[0]
        alpha = self.entropy_coef

        # Bellman target from target critics and a fresh squashed sample
        mean2, log_std2 = self._policy_params(s2)
        eps2 = self.rng.standard_normal(mean2.shape)
        u2 = mean2 + np.exp(log_std2) * eps2
        a2 = np.tanh(u2)
        logp2 = (-0.5 * eps2**2 - log_std2 - 0.5 * LOG_2PI
                 - _squash_correction(u2)).sum(axis=1)
        sa2 = np.concatenate([s2, a2], axis=1)
        q_next = np.minimum(self.q1_target.forward(sa2)[:, 0],
                            self.q2_target.forward(sa2)[:, 0])
        y = r + self.gamma * (1.0 - done) * (q_next - alpha * logp2)

        sa = np.concatenate([s, a], axis=1)
        critic_losses = []
        for net, adam in ((self.q1, self.adam["q1"]), (self.q2, self.adam["q2"])):
            q, tape = net.forward(sa, record=True)
            diff = q[:, 0] - y
            critic_losses.append(float(np.mean(diff**2)))
            grads, _ = net.backward(tape, (2.0 * diff / n)[:, None],
                                    need_input_gradient=False)
            net.adam_update(_clip_grad_norm(grads, self.grad_clip), adam)

        # actor: ascend min(Q1, Q2) - alpha * log pi via the reparameterized sample
        out, tape_a = self.actor.forward(s, record=True)
        mean = out[:, : self.act_dim]
        raw_log_std = out[:, self.act_dim:]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        eps = self.rng.standard_normal(mean.shape)
        u = mean + std * eps
        a_new = np.tanh(u)
        logp = (-0.5 * eps**2 - log_std - 0.5 * LOG_2PI
                - _squash_correction(u)).sum(axis=1)
        sa_new = np.concatenate([s, a_new], axis=1)
        q1v, tq1 = self.q1.forward(sa_new, record=True)
        q2v, tq2 = self.q2.forward(sa_new, record=True)
        q_min = np.minimum(q1v[:, 0], q2v[:, 0])
        pick1 = (q1v[:, 0] <= q2v[:, 0]).astype(np.float64)[:, None]
        act_cols = slice(self.obs_dim, self.obs_dim + self.act_dim)
        g_action = (self.q1.input_gradient(tq1, pick1 / n, input_slice=act_cols)
                    + self.q2.input_gradient(tq2, (1.0 - pick1) / n,
                                             input_slice=act_cols))
        # d mean(q_min) / d a_new
        # d/du of mean(alpha*logp - q_min); the Gaussian term contributes only
        # to log_std (eps is held fixed under reparameterization)
        dl_du = (alpha / n) * 2.0 * a_new - g_action * (1.0 - a_new**2)
        dl_dmean = dl_du
        dl_dlogstd = dl_du * (std * eps) - (alpha / n)
        dl_dlogstd = dl_dlogstd * ((raw_log_std > LOG_STD_MIN)
                                   & (raw_log_std < LOG_STD_MAX))
        grads_a, _ = self.actor.backward(
            tape_a, np.concatenate([dl_dmean, dl_dlogstd], axis=1),
            need_input_gradient=False,
        )
        self.actor.adam_update(_clip_grad_norm(grads_a, self.grad_clip),
                               self.adam["actor"])
        actor_loss = float(np.mean(alpha * logp - q_min))

        # entropy coefficient: descend -log_alpha * (logp + target_entropy)
        ent_gap = float(np.mean(logp) + self.target_entropy)
        alpha_loss = -float(self.log_alpha[0]) * ent_gap
        adam_step(self.log_alpha, np.array([-ent_gap]), self.adam["alpha"])

        self.q1_target.polyak_toward(self.q1, self.tau)
        self.q2_target.polyak_toward(self.q2, self.tau)

        losses = {
            "critic1_loss": critic_losses[0],
            "critic2_loss": critic_losses[1],
            "actor_loss": actor_loss,
            "alpha_loss": alpha_loss,
            "entropy_coef": self.entropy_coef,
            "target_mean": float(np.mean(y)),
        }
        if not all(np.isfinite(v) for v in losses.values()):
            raise RuntimeError(f"non-finite loss in SAC update: {losses}")
        return losses

    # -- persistence --

    def _networks(self):
        return {
            "actor": self.actor,
            "q1": self.q1,
            "q2": self.q2,
            "q1_target": self.q1_target,
            "q2_target": self.q2_target,
        }

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, net in self._networks().items():
            step = self.adam[name].step_count if name in self.adam else 0
            save_network(net, directory / name, seed=self.seed, step_count=step)
        for name in ("actor", "q1", "q2"):
            _save_adam(self.adam[name], directory / f"{name}_adam")
        manifest = {
            "algo": self.algo,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "seed": self.seed,
            "hyper": _json_ready(self.hp),
            "target_entropy": self.target_entropy,
            "log_alpha": float(self.log_alpha[0]),
            "alpha_adam": {
                "m": float(self.adam["alpha"].first_moments[0]),
                "v": float(self.adam["alpha"].second_moments[0]),
                "step_count": self.adam["alpha"].step_count,
            },
            "rng_state": _json_ready(self.rng.bit_generator.state),
            "format_version": 1,
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        )

    @classmethod
    def load(cls, directory) -> "SACAgent":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest["algo"] != cls.algo:
            raise ValueError(f"checkpoint is for {manifest['algo']!r}, not {cls.algo!r}")
        agent = cls(manifest["obs_dim"], manifest["act_dim"], seed=manifest["seed"],
                    **manifest["hyper"])
        for name in agent._networks():
            net, _ = load_network(directory / name)
            getattr(agent, name).set_params(net.get_params())
        for name in ("actor", "q1", "q2"):
            _load_adam(agent.adam[name], directory / f"{name}_adam")
        agent.log_alpha[0] = manifest["log_alpha"]
        aa = manifest["alpha_adam"]
        agent.adam["alpha"].first_moments[0] = aa["m"]
        agent.adam["alpha"].second_moments[0] = aa["v"]
        agent.adam["alpha"].step_count = aa["step_count"]
        agent.rng.bit_generator.state = manifest["rng_state"]
        return agent


class DDPGAgent:
    """Deterministic policy gradient with a single critic and Gaussian exploration."""

    algo = "ddpg"

    def __init__(self, obs_dim: int, act_dim: int, seed: int = 0, **overrides):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.hp = dict(DEFAULTS)
        self.hp.update(overrides)
        self.seed = int(seed)
        self.gamma = self.hp["gamma"]
        self.tau = self.hp["tau"]
        self.batch_size = self.hp["batch_size"]
        self.grad_clip = self.hp["grad_clip"]
        self.noise_std = self.hp["noise_std"]
        hidden = list(self.hp["hidden"])
        lr = self.hp["learning_rate"]
        actor_ss, q_ss, rng_ss = np.random.SeedSequence(self.seed).spawn(3)
        self.actor = init_mlp([obs_dim, *hidden, act_dim], actor_ss,
                              output_activation="tanh")
        self.critic = init_mlp([obs_dim + act_dim, *hidden, 1], q_ss)
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.adam = {
            "actor": adam_init(self.actor.n_params, lr),
            "critic": adam_init(self.critic.n_params, lr),
        }
        self.rng = np.random.default_rng(rng_ss)

    @property
    def entropy_coef(self):
        return None  # not an entropy-regularized method

    def select_action(self, obs, explore: bool = False,
                      deterministic: bool | None = None) -> np.ndarray:
        if deterministic is not None:  # same call shape as SACAgent
            explore = not deterministic
        a = self.actor.forward(obs)
        if not np.isfinite(a).all():
            raise RuntimeError("actor produced a non-finite output")
        if explore:
            a = a + self.rng.normal(0.0, self.noise_std, size=self.act_dim)
        return np.clip(a, -1.0, 1.0)

    def update(self, batch) -> dict:
        s, a, r, s2, done = batch
        n = s.shape[0]
        a2 = self.actor_target.forward(s2)
        q_next = self.critic_target.forward(np.concatenate([s2, a2], axis=1))[:, 0]
        y = r + self.gamma * (1.0 - done) * q_next

        q, tape = self.critic.forward(np.concatenate([s, a], axis=1), record=True)
        diff = q[:, 0] - y
        critic_loss = float(np.mean(diff**2))
        grads, _ = self.critic.backward(tape, (2.0 * diff / n)[:, None],
                                        need_input_gradient=False)
        self.critic.adam_update(_clip_grad_norm(grads, self.grad_clip),
                                self.adam["critic"])

        a_new, tape_a = self.actor.forward(s, record=True)
        qv, tq = self.critic.forward(np.concatenate([s, a_new], axis=1), record=True)
        act_cols = slice(self.obs_dim, self.obs_dim + self.act_dim)
        g_action = self.critic.input_gradient(tq, np.full((n, 1), -1.0 / n),
                                              input_slice=act_cols)
        grads_a, _ = self.actor.backward(tape_a, g_action,
                                         need_input_gradient=False)
        self.actor.adam_update(_clip_grad_norm(grads_a, self.grad_clip),
                               self.adam["actor"])
        actor_loss = -float(np.mean(qv[:, 0]))

        self.actor_target.polyak_toward(self.actor, self.tau)
        self.critic_target.polyak_toward(self.critic, self.tau)

        losses = {"critic1_loss": critic_loss, "critic2_loss": critic_loss,
                  "actor_loss": actor_loss, "alpha_loss": 0.0,
                  "entropy_coef": None, "target_mean": float(np.mean(y))}
        if not np.isfinite(critic_loss) or not np.isfinite(actor_loss):
            raise RuntimeError(f"non-finite loss in DDPG update: {losses}")
        return losses

    def _networks(self):
        return {
            "actor": self.actor,
            "critic": self.critic,
            "actor_target": self.actor_target,
            "critic_target": self.critic_target,
        }

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, net in self._networks().items():
            step = self.adam[name].step_count if name in self.adam else 0
            save_network(net, directory / name, seed=self.seed, step_count=step)
        for name in ("actor", "critic"):
            _save_adam(self.adam[name], directory / f"{name}_adam")
        manifest = {
            "algo": self.algo,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "seed": self.seed,
            "hyper": _json_ready(self.hp),
            "rng_state": _json_ready(self.rng.bit_generator.state),
            "format_version": 1,
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        )

    @classmethod
    def load(cls, directory) -> "DDPGAgent":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest["algo"] != cls.algo:
            raise ValueError(f"checkpoint is for {manifest['algo']!r}, not {cls.algo!r}")
        agent = cls(manifest["obs_dim"], manifest["act_dim"], seed=manifest["seed"],
                    **manifest["hyper"])
        for name in agent._networks():
            net, _ = load_network(directory / name)
            getattr(agent, name).set_params(net.get_params())
        for name in ("actor", "critic"):
            _load_adam(agent.adam[name], directory / f"{name}_adam")
        agent.rng.bit_generator.state = manifest["rng_state"]
        return agent


def _save_adam(state, prefix) -> None:
    prefix = Path(prefix)
    blob = np.concatenate([state.first_moments, state.second_moments])
    prefix.with_suffix(".bin").write_bytes(
        np.ascontiguousarray(blob, dtype="<f8").tobytes()
    )


def _load_adam(state, prefix) -> None:
    prefix = Path(prefix)
    blob = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    n = state.first_moments.size
    if blob.size != 2 * n:
        raise ValueError(f"corrupt Adam blob {prefix}.bin: expected {2 * n} "
                         f"values, got {blob.size}")
    state.first_moments[:] = blob[:n]
    state.second_moments[:] = blob[n:]
    # step counts are stored in the paired network manifests
    net_manifest = json.loads(
        prefix.with_name(prefix.name.replace("_adam", "") + ".json").read_text()
    )
    state.step_count = net_manifest["step_count"]


def load_agent(directory):
    """Load whichever agent type the checkpoint manifest declares."""
    manifest = json.loads((Path(directory) / "manifest.json").read_text())
    cls = {"sac": SACAgent, "ddpg": DDPGAgent}.get(manifest.get("algo"))
    if cls is None:
        raise ValueError(f"unknown agent type {manifest.get('algo')!r} in checkpoint")
    return cls.load(directory)


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


# -- training loop -----------------------------------------------------------


@dataclass
class CurvePoint:
    env_step: int
    eval_success_rate: float  # percent
    eval_mean_reward: float
    eval_mean_actions: float
    critic_loss: float
    actor_loss: float
    entropy_coef: float | None


def evaluate(env, agent, seeds):
    """Deterministic-policy episodes; returns (success %, mean reward, mean actions)."""
    successes, rewards, actions = 0, 0.0, 0
    for seed in seeds:
        obs = env.reset(int(seed))
        terminal = False
        total = 0.0
        info = {}
        while not terminal:
            obs, reward, terminal, info = env.step(
                agent.select_action(obs, deterministic=True)
            )
            total += reward
        successes += int(info["success"])
        rewards += total
        if info["push_count"]:  # push-grasp: pushes plus the terminal grasp
            actions += info["push_count"] + (1 if info["success"] else 0)
        else:  # throw: exactly one action per episode
            actions += 1
    n = len(seeds)
    return 100.0 * successes / n, rewards / n, actions / n


def train(env, agent, total_steps: int = 100_000, warmup: int = 1000, seed: int = 0,
          eval_every: int = 5000, eval_episodes: int = 20,
          buffer: ReplayBuffer | None = None, progress=None):
    """Off-policy loop: uniform-random warmup, then one gradient step per env
    step, with periodic deterministic evaluation snapshots.

    Returns (agent, curve). Fully reproducible from (env task, agent seed, seed).
    """
    if warmup < agent.batch_size:
        raise ValueError(
            f"warmup ({warmup}) must cover at least one batch ({agent.batch_size})"
        )
    streams = np.random.SeedSequence([int(seed), 0x5EED]).spawn(4)
    warm_rng, sample_rng, reset_rng, eval_rng = (np.random.default_rng(s)
                                                 for s in streams)
    buffer = buffer or ReplayBuffer(agent.hp["buffer_capacity"])
    curve = []
    loss_sums = {"critic": 0.0, "actor": 0.0}
    loss_count = 0
    obs = env.reset(int(reset_rng.integers(2**31)))
    for step in range(1, total_steps + 1):
        if step <= warmup:
            action = warm_rng.uniform(-1.0, 1.0, env.action_dim)
        else:
            action = agent.select_action(obs, deterministic=False)
        try:
            obs2, reward, terminal, _ = env.step(action)
        except Exception as exc:
            raise RuntimeError(f"environment failure at step {step}: {exc}") from exc
        buffer.store(obs, action, reward, obs2, terminal)
        obs = env.reset(int(reset_rng.integers(2**31))) if terminal else obs2
        if step > warmup:
            losses = agent.update(buffer.sample(agent.batch_size, sample_rng))
            loss_sums["critic"] += losses["critic1_loss"]
            loss_sums["actor"] += losses["actor_loss"]
            loss_count += 1
        if step % eval_every == 0:
            eval_seeds = eval_rng.integers(2**31, size=eval_episodes)
            rate, mean_reward, mean_actions = evaluate(env.clone(), agent, eval_seeds)
            point = CurvePoint(
                env_step=step,
                eval_success_rate=rate,
                eval_mean_reward=mean_reward,
                eval_mean_actions=mean_actions,
                critic_loss=loss_sums["critic"] / max(1, loss_count),
                actor_loss=loss_sums["actor"] / max(1, loss_count),
                entropy_coef=agent.entropy_coef,
            )
            curve.append(point)
            loss_sums = {"critic": 0.0, "actor": 0.0}
            loss_count = 0
            if progress is not None:
                progress(point)
    return agent, curve
