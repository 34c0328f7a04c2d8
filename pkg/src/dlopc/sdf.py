"""Analytic signed-distance collision scenes.

A Scene is a list of posed convex primitives plus axis-aligned workspace
bounds. Rod segments are treated as capsules of the rod radius for all
distance and contact queries. The ground, when present, is an explicit
half-space obstacle conventionally named "ground".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .se3 import Pose, quat_rotate

SHAPE_KINDS = {
    "box": K.KIND_BOX,
    "sphere": K.KIND_SPHERE,
    "capsule": K.KIND_CAPSULE,
    "cylinder": K.KIND_CYLINDER,
    "halfspace": K.KIND_HALFSPACE,
}

_OBSTACLE_KEYS = {"name", "shape", "half_extents", "radius", "half_length",
                  "normal", "offset", "position", "orientation"}


@dataclass
class Obstacle:
    """One posed primitive. params layout follows _kernels (see its docstring)."""

    name: str
    shape: str
    params: np.ndarray
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if self.shape not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind '{self.shape}'")
        p = np.zeros(4)
        raw = np.asarray(self.params, dtype=np.float64).ravel()
        p[:raw.shape[0]] = raw
        self.params = p
        if self.shape == "box" and np.any(self.params[:3] <= 0):
            raise ValueError(f"obstacle '{self.name}': box half-extents must be > 0")
        if self.shape == "sphere" and self.params[0] <= 0:
            raise ValueError(f"obstacle '{self.name}': sphere radius must be > 0")
        if self.shape in ("capsule", "cylinder") and np.any(self.params[:2] <= 0):
            raise ValueError(f"obstacle '{self.name}': radius and half-length must be > 0")
        if self.shape == "halfspace":
            n = np.linalg.norm(self.params[:3])
            if n < 1e-12:
                raise ValueError(f"obstacle '{self.name}': half-space normal must be nonzero")
            self.params[:3] /= n


@dataclass
class DistanceReport:
    """Closest-approach record between the rod and one obstacle body."""

    obstacle: str
    distance: float          # signed, m; rod radius already subtracted
    segment: int
    point_on_rod: np.ndarray
    point_on_obstacle: np.ndarray
    normal: np.ndarray       # unit, from obstacle toward rod


@dataclass
class Contact:
    segment: int
    point: np.ndarray
    normal: np.ndarray
    depth: float


class Scene:
    """Immutable obstacle set; queries are pure and thread-safe."""

    def __init__(self, obstacles, workspace_min=(-10, -10, -10), workspace_max=(10, 10, 10)):
        names = [o.name for o in obstacles]
        if len(set(names)) != len(names):
            raise ValueError("obstacle names must be unique")
        self.obstacles = list(obstacles)
        self.workspace_min = np.asarray(workspace_min, dtype=np.float64)
        self.workspace_max = np.asarray(workspace_max, dtype=np.float64)
        if np.any(self.workspace_max <= self.workspace_min):
            raise ValueError("workspace max must exceed min on every axis")
        self._pack()

    def _pack(self):
        M = len(self.obstacles)
        self.kinds = np.zeros(M, dtype=np.int64)
        self.oq = np.zeros((M, 4))
        self.ot = np.zeros((M, 3))
        self.par = np.zeros((M, 4))
        self.aabb = np.zeros((M, 2, 3))
        for m, ob in enumerate(self.obstacles):
            self.kinds[m] = SHAPE_KINDS[ob.shape]
            self.oq[m] = ob.pose.orientation
            self.ot[m] = ob.pose.position
            self.par[m] = ob.params
            self.aabb[m] = self._obstacle_aabb(ob)

    @staticmethod
    def _obstacle_aabb(ob: Obstacle) -> np.ndarray:
        if ob.shape == "halfspace":
            return np.array([[-1e9, -1e9, -1e9], [1e9, 1e9, 1e9]])
        if ob.shape == "sphere":
            r = ob.params[0]
            local = np.array([r, r, r])
        elif ob.shape == "box":
            local = ob.params[:3].copy()
        else:  # capsule / cylinder along local z
            r, hl = ob.params[0], ob.params[1]
            local = np.array([r, r, hl + r])
        corners = np.array([[sx * local[0], sy * local[1], sz * local[2]]
                            for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        world = np.array([ob.pose.transform(c) for c in corners])
        return np.stack([world.min(axis=0), world.max(axis=0)])

    def names(self):
        return [o.name for o in self.obstacles]

    def in_workspace(self, point) -> bool:
        p = np.asarray(point)
        return bool(np.all(p >= self.workspace_min) and np.all(p <= self.workspace_max))


def sdf_eval(scene: Scene, point):
    """Minimum signed distance over the scene at a point.

    Returns (distance, outward unit gradient, owning obstacle name). An empty
    scene yields (+inf, zero gradient, "").
    """
    p = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("query point must be finite")
    if len(scene.obstacles) == 0:
        return math.inf, np.zeros(3), ""
    d, idx = K.scene_point_sdf(scene.kinds, scene.oq, scene.ot, scene.par, p[0], p[1], p[2])
    g = K.scene_point_grad(scene.kinds, scene.oq, scene.ot, scene.par, idx, p[0], p[1], p[2])
    return float(d), np.array(g), scene.obstacles[idx].name


def _segment_endpoints(x, q, half):
    e = np.array([quat_rotate(qi, [0.0, 0.0, half]) for qi in q])
    return x - e, x + e


def min_distances(scene: Scene, rod_state, rod_radius: float, proximity: float):
    """Per-obstacle global minimum distance between rod and obstacle.

    At most one report per obstacle body (the minimum over all segments),
    included only when its rod-radius-adjusted distance is <= proximity.
    """
    if proximity < 0:
        raise ValueError("proximity must be >= 0")
    M = len(scene.obstacles)
    if M == 0:
        return []
    x, q, half = rod_state.positions, rod_state.orientations, 0.5 * rod_state.segment_length
    out_d = np.zeros(M)
    out_seg = np.zeros(M, dtype=np.int64)
    out_t = np.zeros(M)
    K.min_distances_kernel(x, q, half, scene.kinds, scene.oq, scene.ot, scene.par,
                           out_d, out_seg, out_t)
    reports = []
    for m in range(M):
        dist = float(out_d[m]) - rod_radius
        if dist > proximity:
            continue
        i = int(out_seg[m])
        u = 2.0 * out_t[m] - 1.0
        p_axis = x[i] + quat_rotate(q[i], [0.0, 0.0, half * u])
        n = np.array(K.scene_point_grad(scene.kinds, scene.oq, scene.ot, scene.par, m,
                                        p_axis[0], p_axis[1], p_axis[2]))
        reports.append(DistanceReport(
            obstacle=scene.obstacles[m].name,
            distance=dist,
            segment=i,
            point_on_rod=p_axis - rod_radius * n,
            point_on_obstacle=p_axis - float(out_d[m]) * n,
            normal=n,
        ))
    return reports


def detect_contacts(scene: Scene, rod_state, rod_radius: float, margin: float):
    """One contact per (segment, obstacle) pair with clearance <= margin.

    depth = margin - clearance >= 0; points lie on the rod surface; normals
    point from the obstacle toward the rod.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    x, q, half = rod_state.positions, rod_state.orientations, 0.5 * rod_state.segment_length
    a, b = _segment_endpoints(x, q, half)
    contacts = []
    for i in range(x.shape[0]):
        for m in range(len(scene.obstacles)):
            if scene.kinds[m] != K.KIND_HALFSPACE:
                mid = 0.5 * (a[i] + b[i])
                if K._aabb_dist(scene.aabb[m], mid[0], mid[1], mid[2]) > half + rod_radius + margin + 0.01:
                    continue
            t, sd = K._segment_min_golden(scene.kinds[m], scene.oq[m], scene.ot[m], scene.par[m],
                                          a[i, 0], a[i, 1], a[i, 2], b[i, 0], b[i, 1], b[i, 2], 1e-7)
            clearance = sd - rod_radius
            if clearance > margin:
                continue
            p_axis = a[i] + (b[i] - a[i]) * t
            n = np.array(K.scene_point_grad(scene.kinds, scene.oq, scene.ot, scene.par, m,
                                            p_axis[0], p_axis[1], p_axis[2]))
            contacts.append(Contact(segment=i, point=p_axis - rod_radius * n,
                                    normal=n, depth=margin - clearance))
    return contacts


def scene_from_dict(data: dict) -> Scene:
    """Build a Scene from the parsed configuration mapping (strict keys)."""
    if "obstacles" not in data:
        raise ValueError("scene requires an 'obstacles' list")
    obstacles = []
    for entry in data["obstacles"]:
        unknown = set(entry) - _OBSTACLE_KEYS
        if unknown:
            raise ValueError(f"unknown obstacle keys {sorted(unknown)}; "
                             f"accepted: {sorted(_OBSTACLE_KEYS)}")
        shape = entry.get("shape")
        if shape not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind '{shape}'; accepted: {sorted(SHAPE_KINDS)}")
        name = entry.get("name")
        if not name:
            raise ValueError("every obstacle needs a name")
        if shape == "box":
            params = entry["half_extents"]
        elif shape == "sphere":
            params = [entry["radius"]]
        elif shape in ("capsule", "cylinder"):
            params = [entry["radius"], entry["half_length"]]
        else:
            params = list(entry["normal"]) + [entry.get("offset", 0.0)]
        pose = Pose(np.asarray(entry.get("position", (0, 0, 0)), dtype=np.float64),
                    np.asarray(entry.get("orientation", (1, 0, 0, 0)), dtype=np.float64))
        obstacles.append(Obstacle(name=name, shape=shape, params=np.asarray(params, dtype=np.float64),
                                  pose=pose))
    ws = data.get("workspace", {})
    return Scene(obstacles,
                 workspace_min=ws.get("min", (-10, -10, -10)),
                 workspace_max=ws.get("max", (10, 10, 10)))
