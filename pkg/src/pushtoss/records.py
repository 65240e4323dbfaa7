"""Per-episode outcome records and their summary statistics / CSV forms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

METRICS_HEADER = ["episode_id", "success", "n_actions", "landing_distance",
                  "total_reward", "seed"]


@dataclass
class EpisodeRecord:
    episode_id: int
    success: bool
    n_actions: int  # pushes + grasp
    landing_distance: float | None  # present iff a throw occurred
    total_reward: float
    seed: int

    def __post_init__(self):
        if self.n_actions < 0:
            raise ValueError(f"n_actions must be >= 0, got {self.n_actions}")


@dataclass
class MetricsSummary:
    success_rate: float  # percent
    mean_actions: float
    std_actions: float
    n_episodes: int


def summarize(records) -> MetricsSummary:
    if not records:
        raise ValueError("cannot summarize zero episodes")
    n = len(records)
    actions = [r.n_actions for r in records]
    mean = sum(actions) / n
    if n > 1:
        std = math.sqrt(sum((a - mean) ** 2 for a in actions) / (n - 1))
    else:
        std = 0.0
    return MetricsSummary(
        success_rate=100.0 * sum(1 for r in records if r.success) / n,
        mean_actions=mean,
        std_actions=std,
        n_episodes=n,
    )


def write_metrics_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for r in records:
            writer.writerow([
                r.episode_id,
                int(r.success),
                r.n_actions,
                "" if r.landing_distance is None else repr(float(r.landing_distance)),
                repr(float(r.total_reward)),
                r.seed,
            ])


def read_metrics_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {reader.fieldnames}")
        for row in reader:
            records.append(EpisodeRecord(
                episode_id=int(row["episode_id"]),
                success=bool(int(row["success"])),
                n_actions=int(row["n_actions"]),
                landing_distance=(None if row["landing_distance"] == ""
                                  else float(row["landing_distance"])),
                total_reward=float(row["total_reward"]),
                seed=int(row["seed"]),
            ))
    return records
