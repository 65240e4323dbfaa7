"""Object-agnostic grasp quality over a 50x50 workspace grid.

Each cell lying on an object is scored over 8 antipodal grasp orientations.
For one orientation two finger zones (rotated rectangles just outside the
object) must descend collision-free: any other disc or the workspace border
intruding into a zone discounts the score linearly in the intrusion depth,
saturating at the finger depth. A separate factor discounts grasps away from
the object's centre of mass. The map rises as clutter clears, which is the
signal the push policy feeds on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from pushtoss.world import Geometry, SceneState


class GraspError(RuntimeError):
    """Grasp execution requested in an invalid state."""


class ActionChoice(Enum):
    GRASP = "grasp"
    PUSH = "push"


@dataclass
class QualityMap:
    grid: np.ndarray  # (n, n) qualities in [0, 1], indexed [iy, ix]
    best_angle: np.ndarray  # (n, n) argmax grasp orientation [rad]
    cell_size: float

    def __post_init__(self):
        if self.grid.shape != self.best_angle.shape or self.grid.ndim != 2:
            raise ValueError(
                f"grid {self.grid.shape} and best_angle {self.best_angle.shape} "
                "must be equal square shapes"
            )

    def flat(self) -> np.ndarray:
        """Row-major flattened qualities (y-major, x-minor)."""
        return self.grid.ravel()


def map_cell_centers(geometry: Geometry):
    """Cell-centre coordinates (xs, ys), each of length map_cells.

    Centres are offset half a cell from the workspace edge, which keeps the
    lattice invariant under quarter-turn rotations about the workspace centre.
    """
    x0, y0, x1, y1 = geometry.workspace
    n = geometry.map_cells
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    return xs, ys


def grasp_orientations(geometry: Geometry) -> np.ndarray:
    k = np.arange(geometry.n_grasp_orientations)
    return k * math.pi / geometry.n_grasp_orientations


def render_quality_map(scene: SceneState, geometry: Geometry | None = None) -> QualityMap:
    geom = geometry or Geometry()
    n = geom.map_cells
    xs, ys = map_cell_centers(geom)
    grid = np.zeros((n, n))
    best_angle = np.zeros((n, n))
    if not scene.objects:
        return QualityMap(grid, best_angle, (geom.workspace[2] - geom.workspace[0]) / n)

    angles = grasp_orientations(geom)
    u = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (K, 2) grasp axis
    v = np.stack([-np.sin(angles), np.cos(angles)], axis=1)  # (K, 2) finger width axis
    half_d = 0.5 * geom.finger_depth
    half_w = 0.5 * geom.finger_width
    x0, y0, x1, y1 = geom.workspace
    centers = np.array([[o.x, o.y] for o in scene.objects])
    radii = np.array([o.radius for o in scene.objects])

    for oi, obj in enumerate(scene.objects):
        iy, ix, cc = _cells_on_disc(xs, ys, obj.x, obj.y, obj.radius)
        if cc.size == 0:
            continue
        dist_c = np.hypot(cc[:, 0] - obj.x, cc[:, 1] - obj.y)
        center_score = np.maximum(0.0, 1.0 - dist_c / obj.radius)
        reach = obj.radius + geom.finger_standoff + half_d
        worst = np.zeros((cc.shape[0], len(angles)))
        for side in (1.0, -1.0):
            rc = cc[:, None, :] + side * reach * u[None, :, :]  # (C, K, 2)
            # workspace border: max outside-depth over the rectangle corners
            corners = (
                rc[:, :, None, :]
                + np.array([1.0, 1.0, -1.0, -1.0])[None, None, :, None]
                * half_d * u[None, :, None, :]
                + np.array([1.0, -1.0, 1.0, -1.0])[None, None, :, None]
                * half_w * v[None, :, None, :]
            )  # (C, K, 4, 2)
            px, py = corners[..., 0], corners[..., 1]
            border = np.maximum.reduce([x0 - px, px - x1, y0 - py, py - y1])
            np.maximum(worst, border.max(axis=2).clip(min=0.0), out=worst)
            # other discs: penetration depth into the zone rectangle
            for oj in range(len(scene.objects)):
                if oj == oi:
                    continue
                w = centers[oj] - rc  # (C, K, 2)
                a = np.abs(np.einsum("ckj,kj->ck", w, u))
                b = np.abs(np.einsum("ckj,kj->ck", w, v))
                gap = np.hypot(np.maximum(a - half_d, 0.0), np.maximum(b - half_w, 0.0))
                np.maximum(worst, radii[oj] - gap, out=worst)
        clearance = np.where(
            worst <= 0.0, 1.0, np.maximum(0.0, 1.0 - worst / geom.finger_depth)
        )
        q = clearance * center_score[:, None]  # (C, K)
        q_best = q.max(axis=1)
        k_best = q.argmax(axis=1)  # first max wins: smallest k on ties
        better = q_best > grid[iy, ix]
        grid[iy[better], ix[better]] = q_best[better]
        best_angle[iy[better], ix[better]] = angles[k_best[better]]
    return QualityMap(grid, best_angle, (x1 - x0) / n)


def _cells_on_disc(xs, ys, cx, cy, r):
    """Grid indices and centre coordinates of cells whose centres lie on the disc."""
    mx = np.flatnonzero(np.abs(xs - cx) <= r)
    my = np.flatnonzero(np.abs(ys - cy) <= r)
    if mx.size == 0 or my.size == 0:
        return (np.empty(0, int), np.empty(0, int), np.empty((0, 2)))
    gx, gy = np.meshgrid(mx, my)
    gx, gy = gx.ravel(), gy.ravel()
    px, py = xs[gx], ys[gy]
    on = np.hypot(px - cx, py - cy) <= r
    return gy[on], gx[on], np.stack([px[on], py[on]], axis=1)


def target_mask(scene: SceneState, geometry: Geometry | None = None) -> np.ndarray:
    """Boolean grid of cells whose centres lie inside the target disc."""
    geom = geometry or Geometry()
    n = geom.map_cells
    mask = np.zeros((n, n), dtype=bool)
    if scene.target_id == -1:
        return mask
    t = scene.target
    iy, ix, _ = _cells_on_disc(*map_cell_centers(geom), t.x, t.y, t.radius)
    mask[iy, ix] = True
    return mask


def target_quality(qmap: QualityMap, mask: np.ndarray) -> float:
    """Max grasp quality over the target mask (the reward's beta); 0 if empty."""
    if not mask.any():
        return 0.0
    return float(qmap.grid[mask].max())


def decide_action(beta: float, threshold: float = 0.7) -> ActionChoice:
    """Grasp only when quality strictly exceeds the threshold."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return ActionChoice.GRASP if beta > threshold else ActionChoice.PUSH


def best_masked_cell(qmap: QualityMap, mask: np.ndarray):
    """(iy, ix) of the best masked cell; ties go to the lowest row-major index."""
    if not mask.any():
        raise GraspError("grasp requested with an empty target mask")
    masked = np.where(mask, qmap.grid, -1.0)
    idx = int(masked.argmax())
    return idx // qmap.grid.shape[1], idx % qmap.grid.shape[1]


def execute_grasp(scene: SceneState, qmap: QualityMap, mask: np.ndarray,
                  threshold: float = 0.7):
    """Grasp at the argmax masked cell; returns (success, scene after).

    Success is deterministic: the chosen cell's quality must exceed the
    threshold. On success the target leaves the table (held by the gripper).
    """
    iy, ix = best_masked_cell(qmap, mask)
    success = float(qmap.grid[iy, ix]) > threshold
    return success, (scene.without_target() if success else scene.copy())


# -- debug dumps -----------------------------------------------------------


def write_map_csv(qmap: QualityMap, path) -> None:
    """Qualities as CSV, top row = max y (matches the PGM orientation)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in qmap.grid[::-1]:
            writer.writerow([repr(float(v)) for v in row])


def write_map_pgm(qmap: QualityMap, path) -> None:
    """Grayscale PGM (P2), quality x 255, row-major, top row = max y."""
    levels = np.rint(qmap.grid[::-1] * 255).astype(int)
    n_rows, n_cols = levels.shape
    lines = [f"P2\n{n_cols} {n_rows}\n255\n"]
    for row in levels:
        lines.append(" ".join(str(v) for v in row) + "\n")
    with open(path, "w") as fh:
        fh.writelines(lines)
