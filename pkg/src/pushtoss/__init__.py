"""Deterministic planar push-grasp-throw testbed with from-scratch SAC/DDPG.

A desk-scale stack for studying the synergy between non-prehensile pushing
and prehensile grasping/throwing: a quasi-static disc world, an analytic
pixel-wise grasp-quality model, two gym-style MDPs, hand-rolled dense
networks with reverse-mode gradients, and SAC/DDPG trainers. Everything is
seeded and single-threaded; identical (config, seed) reproduces identical
artifacts byte for byte.
"""

from pushtoss.agents import DDPGAgent, ReplayBuffer, SACAgent, load_agent, train
from pushtoss.config import ConfigError, RunConfig, load_config
from pushtoss.envs import (
    PushGraspEnv,
    ThrowEnv,
    decode_push_action,
    decode_throw_action,
    shaped_push_reward,
    task3_episode,
)
from pushtoss.grasping import (
    QualityMap,
    decide_action,
    execute_grasp,
    render_quality_map,
    target_mask,
    target_quality,
)
from pushtoss.nets import (
    MLP,
    AdamState,
    adam_init,
    adam_step,
    init_mlp,
    load_network,
    polyak_update,
    save_network,
)
from pushtoss.records import EpisodeRecord, MetricsSummary, summarize
from pushtoss.world import (
    FlightResult,
    Geometry,
    PushCommand,
    SceneState,
    ThrowKernel,
    apply_push,
    generate_scene,
    shoulder_profile,
    simulate_throw,
    target_out_of_workspace,
)

__version__ = "0.1.0"
