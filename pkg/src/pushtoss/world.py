"""Deterministic planar world: disc scenes, quasi-static pushes, ballistic throws.

Everything is a pure function of (scene, command, seed). Objects are discs on
a tabletop rectangle; a cylindrical pusher sweeps in small steps and overlaps
are removed by separation projection; a single-link shoulder swings through a
cubic smoothstep profile and the released object flies drag-free until it
crosses the basket rim plane.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY = 9.81  # m/s^2

_DEG = math.pi / 180.0


class SceneGenerationError(RuntimeError):
    """Rejection sampling could not satisfy a scene constraint."""


@dataclass(frozen=True)
class Geometry:
    """Fixed desk-scale constants. One map cell = 1 cm of workspace."""

    workspace: tuple = (0.0, 0.0, 0.5, 0.5)  # x_min, y_min, x_max, y_max [m]
    map_cells: int = 50
    cell_size: float = 0.01
    object_radius_range: tuple = (0.02, 0.03)
    surround_count_range: tuple = (4, 7)
    surround_gap_range: tuple = (0.001, 0.010)
    pusher_radius: float = 0.01
    pusher_plane_z: float = 0.0
    push_length_range: tuple = (0.02, 0.10)
    push_step: float = 0.002
    overlap_tolerance: float = 1e-4  # 0.1 mm
    max_projection_iters: int = 50
    finger_width: float = 0.015
    finger_depth: float = 0.02
    finger_standoff: float = 0.002
    n_grasp_orientations: int = 8
    grasp_threshold: float = 0.7
    arm_base: tuple = (0.25, -0.2)
    shoulder_height: float = 0.4
    link_length: float = 0.8
    arm_reach: float = 0.9  # R_max, scales basket sampling distances
    basket_rim_z: float = 0.1
    basket_radius: float = 0.10
    kernel_j_i: float = -45.0 * _DEG
    kernel_j_f: float = 60.0 * _DEG
    kernel_duration: float = 0.6
    kernel_release_fraction: float = 0.45
    residual_joint_range: float = 30.0 * _DEG
    residual_duration_range: float = 0.3
    residual_release_range: float = 0.40
    duration_clamp: tuple = (0.2, 1.2)
    release_fraction_clamp: tuple = (0.05, 0.95)
    basket_range_task1: tuple = (0.75, 0.90)  # x arm_reach, within reach
    basket_range_task2: tuple = (0.80, 1.60)
    basket_range_task3: tuple = (1.05, 1.60)
    basket_azimuth_limit: float = 30.0 * _DEG
    max_pushes: int = 5

    def validate(self) -> None:
        x0, y0, x1, y1 = self.workspace
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"workspace must have positive area, got {self.workspace}")
        # the quality map is a fixed square grid over the workspace
        if abs((x1 - x0) - (y1 - y0)) > 1e-12:
            raise ValueError(f"workspace must be square, got {self.workspace}")
        if abs((x1 - x0) - self.map_cells * self.cell_size) > 1e-9:
            raise ValueError(
                f"cell_size {self.cell_size} x map_cells {self.map_cells} must "
                f"equal the workspace extent {x1 - x0}"
            )
        for name in ("pusher_radius", "cell_size", "push_step", "link_length",
                     "basket_radius", "basket_rim_z", "arm_reach", "kernel_duration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        rmin, rmax = self.object_radius_range
        if not 0 < rmin <= rmax:
            raise ValueError(f"object_radius_range invalid: {self.object_radius_range}")
        lmin, lmax = self.push_length_range
        if not 0 < lmin <= lmax:
            raise ValueError(f"push_length_range invalid: {self.push_length_range}")
        if not 0.0 < self.kernel_release_fraction < 1.0:
            raise ValueError(
                f"kernel_release_fraction must be in (0,1), got {self.kernel_release_fraction}"
            )
        if self.kernel_j_i == self.kernel_j_f:
            raise ValueError("kernel_j_i and kernel_j_f must differ")
        if self.max_pushes < 1:
            raise ValueError(f"max_pushes must be >= 1, got {self.max_pushes}")

    def kernel(self) -> "ThrowKernel":
        """The taught baseline throw that residual actions adjust."""
        return ThrowKernel(
            j_i=self.kernel_j_i,
            j_f=self.kernel_j_f,
            tau_dur=self.kernel_duration,
            t_r=self.kernel_release_fraction * self.kernel_duration,
            link_length=self.link_length,
        )


@dataclass(frozen=True)
class Disc:
    x: float
    y: float
    radius: float
    id: int


@dataclass(frozen=True)
class Basket:
    x: float
    y: float
    z: float  # rim height
    inner_radius: float


@dataclass
class SceneState:
    objects: list
    target_id: int
    workspace: tuple  # x_min, y_min, x_max, y_max
    basket: Basket
    arm_base: tuple  # x, y, shoulder_height
    pusher_radius: float

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        # target_id -1 marks "held by the gripper / removed from the table"
        if self.target_id != -1 and self.target_id not in ids:
            raise ValueError(f"target_id {self.target_id} not among object ids {ids}")
        if any(o.radius <= 0 for o in self.objects):
            raise ValueError("all object radii must be > 0")
        x0, y0, x1, y1 = self.workspace
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"workspace must have positive area, got {self.workspace}")
        if self.basket.inner_radius <= 0:
            raise ValueError("basket inner radius must be > 0")

    @property
    def target(self) -> Disc:
        for o in self.objects:
            if o.id == self.target_id:
                return o
        raise ValueError(f"no target on the table (target_id={self.target_id})")

    def copy(self) -> "SceneState":
        return SceneState(
            objects=list(self.objects),
            target_id=self.target_id,
            workspace=self.workspace,
            basket=self.basket,
            arm_base=self.arm_base,
            pusher_radius=self.pusher_radius,
        )

    def without_target(self) -> "SceneState":
        """Scene after the target is lifted off the table."""
        return SceneState(
            objects=[o for o in self.objects if o.id != self.target_id],
            target_id=-1,
            workspace=self.workspace,
            basket=self.basket,
            arm_base=self.arm_base,
            pusher_radius=self.pusher_radius,
        )


@dataclass(frozen=True)
class PushCommand:
    start: tuple  # x, y, z [m]
    direction: float  # radians in [0, 2*pi)
    length: float  # m

    def validate(self, geometry: Geometry) -> None:
        lmin, lmax = geometry.push_length_range
        if not lmin <= self.length <= lmax:
            raise ValueError(f"push length {self.length} outside [{lmin}, {lmax}]")
        if not 0.0 <= self.direction < 2.0 * math.pi:
            raise ValueError(f"push direction {self.direction} outside [0, 2*pi)")
        x0, y0, x1, y1 = geometry.workspace
        x, y, z = self.start
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            raise ValueError(f"push start ({x}, {y}) outside workspace")
        if z != geometry.pusher_plane_z:
            raise ValueError(
                f"push z {z} differs from pusher plane {geometry.pusher_plane_z}"
            )


@dataclass(frozen=True)
class ThrowKernel:
    j_i: float  # initial shoulder angle [rad]
    j_f: float  # final shoulder angle [rad]
    tau_dur: float  # trajectory duration [s]
    t_r: float  # release time [s]
    link_length: float  # m

    def __post_init__(self):
        if not 0.0 < self.t_r < self.tau_dur:
            raise ValueError(f"release time must satisfy 0 < t_r < tau, got "
                             f"t_r={self.t_r}, tau={self.tau_dur}")
        if self.j_i == self.j_f:
            raise ValueError("j_i and j_f must differ")
        if self.link_length <= 0:
            raise ValueError(f"link_length must be > 0, got {self.link_length}")


@dataclass(frozen=True)
class FlightResult:
    landing: tuple  # x, y [m]
    release_position: tuple  # x, y, z [m]
    release_velocity: tuple  # vx, vy, vz [m/s]
    flight_time: float
    in_basket: bool
    distance_to_goal: float
    dx: float
    dy: float


# -- scene generation --------------------------------------------------------


def generate_scene(task: str, rng_seed, geometry: Geometry | None = None) -> SceneState:
    """Sample a task scene; deterministic per (task, seed, geometry).

    task1/task3: a target disc in the central 60% of the workspace ringed by
    4-7 neighbours at sub-clearance gaps, rejection-sampled until the target's
    grasp quality is below the grasp threshold. task2: a single object already
    held, only the basket position varies.
    """
    geom = geometry or Geometry()
    geom.validate()
    if task not in ("task1", "task2", "task3"):
        raise ValueError(f"unknown task {task!r}")
    rng = np.random.default_rng(rng_seed)
    if task == "task2":
        rmin, rmax = geom.object_radius_range
        held = Disc(geom.arm_base[0], geom.arm_base[1],
                    float(rng.uniform(rmin, rmax)), 0)
        basket = _sample_basket(rng, geom, geom.basket_range_task2)
        return SceneState(
            objects=[held],
            target_id=0,
            workspace=geom.workspace,
            basket=basket,
            arm_base=(geom.arm_base[0], geom.arm_base[1], geom.shoulder_height),
            pusher_radius=geom.pusher_radius,
        )

    from pushtoss.grasping import render_quality_map, target_mask, target_quality

    basket_range = geom.basket_range_task1 if task == "task1" else geom.basket_range_task3
    for reseed_round in range(10):
        for _ in range(100):
            placed = _place_clutter(rng, geom)
            if placed is None:
                continue
            basket = _sample_basket(rng, geom, basket_range)
            scene = SceneState(
                objects=placed,
                target_id=0,
                workspace=geom.workspace,
                basket=basket,
                arm_base=(geom.arm_base[0], geom.arm_base[1], geom.shoulder_height),
                pusher_radius=geom.pusher_radius,
            )
            qmap = render_quality_map(scene, geom)
            beta = target_quality(qmap, target_mask(scene, geom))
            if beta < geom.grasp_threshold:
                return scene
        rng = np.random.default_rng([int(rng_seed), reseed_round + 1])
    raise SceneGenerationError(
        "rejection sampling exhausted: could not place clutter with target grasp "
        f"quality below {geom.grasp_threshold} after 10x100 attempts"
    )


def _place_clutter(rng, geom: Geometry):
    """One placement attempt: target plus a tight neighbour ring, or None."""
    x0, y0, x1, y1 = geom.workspace
    wx, wy = x1 - x0, y1 - y0
    rmin, rmax = geom.object_radius_range
    tx = float(rng.uniform(x0 + 0.2 * wx, x1 - 0.2 * wx))
    ty = float(rng.uniform(y0 + 0.2 * wy, y1 - 0.2 * wy))
    r_t = float(rng.uniform(rmin, rmax))
    nmin, nmax = geom.surround_count_range
    n_sur = int(rng.integers(nmin, nmax + 1))
    gmin, gmax = geom.surround_gap_range
    objects = [Disc(tx, ty, r_t, 0)]
    base_angle = float(rng.uniform(0.0, 2.0 * math.pi))
    for i in range(n_sur):
        for _ in range(20):
            ang = base_angle + 2.0 * math.pi * (i + float(rng.uniform(0.0, 0.6))) / n_sur
            gap = float(rng.uniform(gmin, gmax))
            r_n = float(rng.uniform(rmin, rmax))
            cx = tx + (r_t + gap + r_n) * math.cos(ang)
            cy = ty + (r_t + gap + r_n) * math.sin(ang)
            if not (x0 + r_n <= cx <= x1 - r_n and y0 + r_n <= cy <= y1 - r_n):
                continue
            if all(math.hypot(cx - o.x, cy - o.y) >= r_n + o.radius + 1e-6
                   for o in objects):
                objects.append(Disc(cx, cy, r_n, i + 1))
                break
        else:
            return None
    return objects


def _sample_basket(rng, geom: Geometry, range_mult) -> Basket:
    lo, hi = range_mult
    dist = float(rng.uniform(lo, hi)) * geom.arm_reach
    az = float(rng.uniform(-geom.basket_azimuth_limit, geom.basket_azimuth_limit))
    bx = geom.arm_base[0] + dist * math.sin(az)
    by = geom.arm_base[1] + dist * math.cos(az)  # arm forward axis is +y
    return Basket(bx, by, geom.basket_rim_z, geom.basket_radius)


# -- pushing -------------------------------------------------------------


def apply_push(scene: SceneState, cmd: PushCommand,
               geometry: Geometry | None = None) -> SceneState:
    """Sweep the pusher disc along cmd and return the resulting scene.

    The pusher advances in push_step increments (plus a final partial step to
    the exact length); at each stop, objects overlapping the pusher are
    projected out along the contact normal and object-object overlaps are
    removed by symmetric separation, iterated until the worst overlap is
    below 0.1 mm. Objects may leave the workspace.
    """
    geom = geometry or Geometry()
    cmd.validate(geom)
    ux, uy = math.cos(cmd.direction), math.sin(cmd.direction)
    sx, sy = cmd.start[0], cmd.start[1]
    pos = [[o.x, o.y] for o in scene.objects]
    radii = [o.radius for o in scene.objects]
    pr = scene.pusher_radius
    n_full = int(cmd.length / geom.push_step)
    stops = [k * geom.push_step for k in range(n_full + 1)]
    if stops[-1] < cmd.length:
        stops.append(cmd.length)
    for s in stops:
        px, py = sx + ux * s, sy + uy * s
        _project_overlaps(pos, radii, px, py, pr, (ux, uy),
                          geom.overlap_tolerance, geom.max_projection_iters)
    out = scene.copy()
    out.objects = [replace(o, x=p[0], y=p[1]) for o, p in zip(scene.objects, pos)]
    return out


def _project_overlaps(pos, radii, px, py, pr, push_dir, tol, max_iters):
    m = len(pos)
    for _ in range(max_iters):
        # measure first so the exit condition describes the final state
        worst = 0.0
        for i in range(m):
            d = math.hypot(pos[i][0] - px, pos[i][1] - py)
            worst = max(worst, radii[i] + pr - d)
        for i in range(m):
            for j in range(i + 1, m):
                d = math.hypot(pos[j][0] - pos[i][0], pos[j][1] - pos[i][1])
                worst = max(worst, radii[i] + radii[j] - d)
        if worst < tol:
            return
        for i in range(m):
            dx, dy = pos[i][0] - px, pos[i][1] - py
            dist = math.hypot(dx, dy)
            if radii[i] + pr - dist > 0.0:
                if dist > 1e-12:
                    nx, ny = dx / dist, dy / dist
                else:
                    nx, ny = push_dir
                pos[i][0] = px + nx * (radii[i] + pr)
                pos[i][1] = py + ny * (radii[i] + pr)
        for i in range(m):
            for j in range(i + 1, m):
                dx, dy = pos[j][0] - pos[i][0], pos[j][1] - pos[i][1]
                dist = math.hypot(dx, dy)
                overlap = radii[i] + radii[j] - dist
                if overlap > 0.0:
                    if dist > 1e-12:
                        nx, ny = dx / dist, dy / dist
                    else:
                        nx, ny = 1.0, 0.0
                    half = 0.5 * overlap
                    pos[i][0] -= nx * half
                    pos[i][1] -= ny * half
                    pos[j][0] += nx * half
                    pos[j][1] += ny * half


def max_overlap(scene: SceneState) -> float:
    """Worst pairwise disc interpenetration in the scene (0 when separated)."""
    worst = 0.0
    objs = scene.objects
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            d = math.hypot(objs[i].x - objs[j].x, objs[i].y - objs[j].y)
            worst = max(worst, objs[i].radius + objs[j].radius - d)
    return worst


def target_out_of_workspace(scene: SceneState) -> bool:
    """True iff the target centre lies strictly outside the closed workspace."""
    t = scene.target
    x0, y0, x1, y1 = scene.workspace
    return t.x < x0 or t.x > x1 or t.y < y0 or t.y > y1


# -- throwing ------------------------------------------------------------


def swing_state(j_i, j_f, duration, t):
    """Cubic smoothstep shoulder angle and angular velocity (ufunc-friendly)."""
    u = np.asarray(t, dtype=np.float64) / duration
    s = (3.0 - 2.0 * u) * u * u
    j = j_i + (j_f - j_i) * s
    omega = (j_f - j_i) * 6.0 * u * (1.0 - u) / duration
    return j, omega


def shoulder_profile(kernel: ThrowKernel, t: float):
    """Shoulder (angle, angular velocity) at time t in [0, tau]."""
    if not 0.0 <= t <= kernel.tau_dur:
        raise ValueError(f"t={t} outside [0, {kernel.tau_dur}]")
    j, omega = swing_state(kernel.j_i, kernel.j_f, kernel.tau_dur, t)
    return float(j), float(omega)


def ballistic_landing(position, velocity, plane_z, gravity=GRAVITY):
    """Drag-free flight from a release state down to a horizontal plane.

    Returns (flight_time, landing_xy, reached_plane). Takes the larger root
    of the crossing quadratic (the descending crossing). When the trajectory
    never reaches plane_z, falls back to the ground plane z=0 with
    reached_plane=False; a release already below ground lands in place.
    Accepts trailing-axis-3 arrays and broadcasts.
    """
    pos = np.asarray(position, dtype=np.float64)
    vel = np.asarray(velocity, dtype=np.float64)
    z0, vz = pos[..., 2], vel[..., 2]
    disc_rim = vz * vz - 2.0 * gravity * (plane_z - z0)
    t_rim = (vz + np.sqrt(np.maximum(disc_rim, 0.0))) / gravity
    rim_ok = (disc_rim >= 0.0) & (t_rim >= 0.0)
    disc_gnd = vz * vz + 2.0 * gravity * z0
    t_gnd = (vz + np.sqrt(np.maximum(disc_gnd, 0.0))) / gravity
    gnd_ok = (disc_gnd >= 0.0) & (t_gnd >= 0.0)
    t = np.where(rim_ok, t_rim, np.where(gnd_ok, t_gnd, 0.0))
    landing = pos[..., :2] + vel[..., :2] * t[..., None]
    return t, landing, rim_ok


def simulate_throw(scene: SceneState, kernel: ThrowKernel) -> FlightResult:
    """Swing the arm toward the basket, release at t_r, fly to the rim plane.

    The throw plane is yawed so its horizontal axis points from the arm base
    at the basket centre; the landing point therefore always lies on that
    vertical plane and range is the only error dimension.
    """
    bx, by, hs = scene.arm_base
    dxg, dyg = scene.basket.x - bx, scene.basket.y - by
    aim = math.hypot(dxg, dyg)
    if aim < 1e-9:
        raise ValueError("basket centre coincides with the arm base")
    ux, uy = dxg / aim, dyg / aim
    j, omega = shoulder_profile(kernel, kernel.t_r)
    ll = kernel.link_length
    fwd = ll * math.cos(j)  # horizontal offset along the aim direction
    z0 = hs + ll * math.sin(j)
    v_fwd = -ll * omega * math.sin(j)
    v_z = ll * omega * math.cos(j)
    t, land, rim = ballistic_landing(
        np.array([fwd, 0.0, z0]), np.array([v_fwd, 0.0, v_z]), scene.basket.z
    )
    rng_from_base = float(land[0])
    lx, ly = bx + rng_from_base * ux, by + rng_from_base * uy
    dx, dy = lx - scene.basket.x, ly - scene.basket.y
    dist = math.hypot(dx, dy)
    return FlightResult(
        landing=(lx, ly),
        release_position=(bx + fwd * ux, by + fwd * uy, z0),
        release_velocity=(v_fwd * ux, v_fwd * uy, v_z),
        flight_time=float(t),
        in_basket=bool(rim) and dist <= scene.basket.inner_radius,
        distance_to_goal=dist,
        dx=dx,
        dy=dy,
    )


# -- serialization ---------------------------------------------------------


def scene_to_json(scene: SceneState) -> str:
    doc = {
        "units": {"length": "m", "angle": "rad"},
        "objects": [
            {"x": o.x, "y": o.y, "radius": o.radius, "id": o.id}
            for o in scene.objects
        ],
        "target_id": scene.target_id,
        "workspace": list(scene.workspace),
        "basket": {
            "x": scene.basket.x,
            "y": scene.basket.y,
            "z": scene.basket.z,
            "inner_radius": scene.basket.inner_radius,
        },
        "arm_base": list(scene.arm_base),
        "pusher_radius": scene.pusher_radius,
    }
    return json.dumps(doc, sort_keys=True)


def scene_from_json(text: str) -> SceneState:
    doc = json.loads(text)
    return SceneState(
        objects=[Disc(o["x"], o["y"], o["radius"], o["id"]) for o in doc["objects"]],
        target_id=doc["target_id"],
        workspace=tuple(doc["workspace"]),
        basket=Basket(**doc["basket"]),
        arm_base=tuple(doc["arm_base"]),
        pusher_radius=doc["pusher_radius"],
    )


def write_trajectory_csv(scene: SceneState, kernel: ThrowKernel, path,
                         dt: float = 1e-3) -> None:
    """Dump (t, j, omega, x, y, z) at dt resolution: arm sweep, then flight."""
    bx, by, hs = scene.arm_base
    dxg, dyg = scene.basket.x - bx, scene.basket.y - by
    aim = math.hypot(dxg, dyg)
    ux, uy = dxg / aim, dyg / aim
    flight = simulate_throw(scene, kernel)
    rows = []
    t = 0.0
    while t <= kernel.t_r + 1e-12:
        j, omega = shoulder_profile(kernel, min(t, kernel.tau_dur))
        ll = kernel.link_length
        rows.append((t, j, omega, bx + ll * math.cos(j) * ux,
                     by + ll * math.cos(j) * uy, hs + ll * math.sin(j)))
        t += dt
    jr, wr = shoulder_profile(kernel, kernel.t_r)
    px, py, pz = flight.release_position
    vx, vy, vz = flight.release_velocity
    ft = 0.0
    while ft <= flight.flight_time + 1e-12:
        rows.append((kernel.t_r + ft, jr, wr, px + vx * ft, py + vy * ft,
                     pz + vz * ft - 0.5 * GRAVITY * ft * ft))
        ft += dt
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "j", "omega", "x", "y", "z"])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
