"""Rigid-chain global planner: rod approximation, chain IK/FK, RRT-Connect,
shortcut smoothing, waypoint timing, and URDF export.

The planner sees the rod as N_apr equal rigid links joined by XYZ spherical
joints on a prismatic base. Joint limits bound the *bending* joints between
links; the first spherical joint orients the whole chain and spans a full
turn, since it models no material curvature. Gravity is deliberately absent
here; the local controller compensates during execution.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .sdf import Scene
from .se3 import (Pose, average_quaternions, matrix_to_quat, quat_angle,
                  quat_rotate, quat_to_matrix, subproblem1, subproblem2)


class PlanningFailed(RuntimeError):
    pass


class GatingFailed(PlanningFailed):
    """Start/goal state collision or repair failure; auto mode escalates."""


class ApproximationFailed(RuntimeError):
    pass


class IKSingular(RuntimeError):
    pass


@dataclass
class ApproxRod:
    """Chain-consistent approximation: equal links sharing endpoints."""

    segment_length: float
    centers: np.ndarray        # (K, 3)
    orientations: np.ndarray   # (K, 4)

    @property
    def n_links(self) -> int:
        return self.centers.shape[0]

    def endpoints(self) -> np.ndarray:
        """(K+1, 3) chain endpoints."""
        K_ = self.n_links
        pts = np.zeros((K_ + 1, 3))
        half = 0.5 * self.segment_length
        pts[0] = self.centers[0] - quat_rotate(self.orientations[0], [0, 0, half])
        for i in range(K_):
            pts[i + 1] = self.centers[i] + quat_rotate(self.orientations[i], [0, 0, half])
        return pts

    def translated(self, delta) -> "ApproxRod":
        return ApproxRod(self.segment_length, self.centers + np.asarray(delta),
                         self.orientations.copy())


@dataclass
class PlannerConfig:
    n_apr: object = "auto"          # int or "auto"
    n_apr_cap: int = 12
    joint_limit: float = 1.8        # rad, bending joints only
    link_radius: float | None = None  # defaults to the rod radius
    clearance: float = 0.0          # required clearance during planning
    depth_threshold: float = 0.02   # repair vs refine
    repair_shift_cap: float = 0.3
    time_budget: float = 10.0       # s per RRT attempt
    max_iterations: int = 200000
    restarts: int = 3
    extend_step: float = 0.25       # weighted joint-space norm
    interp_step: float = 0.02       # m of max link displacement per check
    shortcut_iterations: int = 200
    seed: int = 0
    v_lin_max: float = 0.3
    v_ang_max: float = 0.3


@dataclass
class GuidancePath:
    times: np.ndarray               # (W,)
    agents: list                    # [ [Pose], [Pose] ]

    @property
    def n_waypoints(self) -> int:
        return len(self.times)

    def remaining_length(self, agent: int, position, k: int) -> float:
        """Linear path length left from `position` via waypoint k to the end."""
        pts = self.agents[agent]
        if k >= len(pts):
            return 0.0
        total = float(np.linalg.norm(pts[k].position - np.asarray(position)))
        for i in range(k, len(pts) - 1):
            total += float(np.linalg.norm(pts[i + 1].position - pts[i].position))
        return total


@dataclass
class PlanResult:
    guidance: GuidancePath
    approx_start: ApproxRod
    approx_goal: ApproxRod
    joint_path: list
    stats: dict
    urdf: str


# ---------------------------------------------------------------------------
# approximation and chain kinematics
# ---------------------------------------------------------------------------

def approximate_rod(state, n_apr: int) -> ApproxRod:
    """Average segment ranges into N_apr equal links, preserving total length.

    Ranges follow i_start = round(i N / N_apr), i_end = round((i+1) N / N_apr);
    positions average arithmetically, orientations by Markley's method. The
    chain is rebuilt from the averaged orientations so consecutive links share
    endpoints exactly.
    """
    N = state.n_segments
    if not 1 <= n_apr <= N:
        raise ValueError("need 1 <= n_apr <= rod segment count")
    L = state.segment_length * N
    l_apr = L / n_apr
    centers = np.zeros((n_apr, 3))
    quats = np.zeros((n_apr, 4))
    for i in range(n_apr):
        i_start = int(round(i * N / n_apr))
        i_end = max(int(round((i + 1) * N / n_apr)), i_start + 1)
        centers[i] = np.mean(state.positions[i_start:i_end], axis=0)
        quats[i] = average_quaternions([state.orientations[k]
                                        for k in range(i_start, i_end)])
    # anchor the chain at the first averaged segment's start point
    base = centers[0] - quat_rotate(quats[0], [0, 0, 0.5 * l_apr])
    chain_centers = np.zeros_like(centers)
    p = base.copy()
    for i in range(n_apr):
        step = quat_rotate(quats[i], [0, 0, l_apr])
        chain_centers[i] = p + 0.5 * step
        p = p + step
    return ApproxRod(l_apr, chain_centers, quats)


def approximation_error(state, apr: ApproxRod) -> float:
    """Mean distance from original segment centers to the approximated chain."""
    pts = apr.endpoints()
    total = 0.0
    for c in state.positions:
        best = math.inf
        for i in range(apr.n_links):
            a, b = pts[i], pts[i + 1]
            ab = b - a
            t = float(np.dot(c - a, ab) / max(np.dot(ab, ab), 1e-18))
            t = min(max(t, 0.0), 1.0)
            best = min(best, float(np.linalg.norm(c - (a + t * ab))))
        total += best
    return total / state.positions.shape[0]


def chain_fk(theta: np.ndarray, n_links: int, link_length: float):
    """Endpoints (K+1, 3) and link frames (K, 3, 3) of a chain configuration."""
    theta = np.asarray(theta, dtype=np.float64)
    pts = np.zeros((n_links + 1, 3))
    Rs = np.zeros((n_links, 3, 3))
    K.chain_fk_kernel(theta, n_links, link_length, pts, Rs)
    return pts, Rs


def chain_to_approx(theta, n_links, link_length) -> ApproxRod:
    pts, Rs = chain_fk(theta, n_links, link_length)
    centers = 0.5 * (pts[:-1] + pts[1:])
    quats = np.array([matrix_to_quat(R) for R in Rs])
    return ApproxRod(link_length, centers, quats)


def chain_ik(apr: ApproxRod) -> np.ndarray:
    """Joint vector reproducing the approximated chain frames.

    theta_x, theta_y of each joint come from Paden-Kahan subproblem 2 on the
    link z-axis (smallest |tx|+|ty| solution), theta_z from subproblem 1 on
    the rotated x-axis.
    """
    K_ = apr.n_links
    theta = np.zeros(3 + 3 * K_)
    pts = apr.endpoints()
    theta[0:3] = pts[0]
    ez = np.array([0.0, 0.0, 1.0])
    ex = np.array([1.0, 0.0, 0.0])
    R_prev = np.eye(3)
    for i in range(K_):
        R_i = quat_to_matrix(apr.orientations[i])
        R_rel = R_prev.T @ R_i
        v = R_rel @ ez
        if v[2] < -1.0 + 1e-9:
            raise IKSingular(f"IK singular link {i}: z-axis anti-parallel")
        sols = subproblem2(ex, np.array([0.0, 1.0, 0.0]), ez, v)
        if not sols:
            raise IKSingular(f"IK singular link {i}: no subproblem-2 solution")
        tx, ty = min(sols, key=lambda s: abs(s[0]) + abs(s[1]))
        Rxy = _rot_x(tx) @ _rot_y(ty)
        x_target = Rxy.T @ (R_rel @ ex)
        tz = subproblem1(ez, ex, x_target)
        theta[3 + 3 * i] = tx
        theta[4 + 3 * i] = ty
        theta[5 + 3 * i] = tz
        R_prev = R_i
    return theta


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def check_state_collision(theta, scene: Scene, n_links: int, link_length: float,
                          link_radius: float):
    """Per-link penetrations (link index, depth, outward normal); empty means
    the configuration is collision-free."""
    pts, _ = chain_fk(theta, n_links, link_length)
    out = []
    for i in range(n_links):
        a, b = pts[i], pts[i + 1]
        worst = (math.inf, None)
        for m in range(len(scene.obstacles)):
            t, sd = K._segment_min_golden(scene.kinds[m], scene.oq[m], scene.ot[m],
                                          scene.par[m], a[0], a[1], a[2],
                                          b[0], b[1], b[2], 1e-6)
            clear = sd - link_radius
            if clear < worst[0]:
                p = a + (b - a) * t
                n = np.array(K.scene_point_grad(scene.kinds, scene.oq, scene.ot,
                                                scene.par, m, p[0], p[1], p[2]))
                worst = (clear, n)
        if worst[0] < 0 and worst[1] is not None:
            out.append((i, -worst[0], worst[1]))
    return out


def repair_state(apr: ApproxRod, scene: Scene, link_radius: float,
                 shift_cap: float = 0.3, clearance_pad: float = 0.005):
    """Translate the whole chain out of shallow collisions.

    Returns the repaired ApproxRod, or None as the "refine" signal (increase
    N_apr) when shifting cannot resolve the contact within the cap.
    """
    current = apr
    total_shift = 0.0
    for _ in range(5):
        theta = chain_ik(current)
        pens = check_state_collision(theta, scene, current.n_links,
                                     current.segment_length, link_radius)
        if not pens:
            return current
        max_depth = max(p[1] for p in pens)
        avg_n = np.sum([p[2] for p in pens], axis=0)
        norm = np.linalg.norm(avg_n)
        if norm < 1e-9:
            return None
        shift = (avg_n / norm) * (max_depth + clearance_pad)
        total_shift += float(np.linalg.norm(shift))
        if total_shift > shift_cap:
            return None
        current = current.translated(shift)
    theta = chain_ik(current)
    if check_state_collision(theta, scene, current.n_links,
                             current.segment_length, link_radius):
        return None
    return current


# ---------------------------------------------------------------------------
# RRT-Connect and smoothing
# ---------------------------------------------------------------------------

class _Tree:
    def __init__(self, dim, cap, root):
        self.nodes = np.zeros((cap, dim))
        self.parent = np.full(cap, -1, dtype=np.int64)
        self.nodes[0] = root
        self.size = 1

    def add(self, q, parent):
        if self.size >= self.nodes.shape[0]:
            self.nodes = np.vstack([self.nodes, np.zeros_like(self.nodes)])
            self.parent = np.concatenate([self.parent, np.full(len(self.parent), -1,
                                                               dtype=np.int64)])
        self.nodes[self.size] = q
        self.parent[self.size] = parent
        self.size += 1
        return self.size - 1

    def nearest(self, q, weights):
        diff = (self.nodes[:self.size] - q) * weights
        return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))

    def path_from(self, idx):
        out = []
        while idx >= 0:
            out.append(self.nodes[idx].copy())
            idx = int(self.parent[idx])
        return out[::-1]


class _ChainWorld:
    """Bundles chain geometry + scene for validity queries."""

    def __init__(self, scene, n_links, link_length, link_radius, clearance,
                 interp_step):
        self.scene = scene
        self.K = n_links
        self.l = link_length
        self.radius = link_radius
        self.clearance = clearance
        self.interp_step = interp_step
        self._pts = np.zeros((n_links + 1, 3))
        self._Rs = np.zeros((n_links, 3, 3))

    def state_free(self, theta) -> bool:
        K.chain_fk_kernel(theta, self.K, self.l, self._pts, self._Rs)
        c = K.chain_min_clearance(self._pts, self.radius, self.scene.kinds,
                                  self.scene.oq, self.scene.ot, self.scene.par,
                                  self.scene.aabb)
        return c > self.clearance

    def edge_free(self, t1, t2) -> bool:
        return bool(K.chain_edge_free(t1, t2, self.K, self.l, self.radius,
                                      self.scene.kinds, self.scene.oq, self.scene.ot,
                                      self.scene.par, self.scene.aabb,
                                      self.clearance, self.interp_step))


def _metric_weights(n_links, link_length):
    w = np.ones(3 + 3 * n_links)
    for k in range(n_links):
        w[3 + 3 * k: 6 + 3 * k] = (n_links - k) * link_length
    return w


def plan_rrt_connect(start, goal, scene: Scene, n_links: int, link_length: float,
                     cfg: PlannerConfig):
    """Bidirectional RRT-Connect in R^(3K+3). Returns the joint path including
    start and goal; raises PlanningFailed when every restart times out."""
    radius = cfg.link_radius
    world = _ChainWorld(scene, n_links, link_length, radius, cfg.clearance,
                        cfg.interp_step)
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if not world.state_free(start):
        raise PlanningFailed("start configuration is in collision")
    if not world.state_free(goal):
        raise PlanningFailed("goal configuration is in collision")
    if np.allclose(start, goal, atol=1e-12):
        return [start.copy()]
    weights = _metric_weights(n_links, link_length)
    lo = np.concatenate([scene.workspace_min,
                         np.tile([-math.pi, -math.pi, -math.pi], 1),
                         np.tile([-cfg.joint_limit] * 3, max(n_links - 1, 0))])
    hi = np.concatenate([scene.workspace_max,
                         np.tile([math.pi, math.pi, math.pi], 1),
                         np.tile([cfg.joint_limit] * 3, max(n_links - 1, 0))])

    if world.edge_free(start, goal):
        return [start.copy(), goal.copy()]

    for attempt in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed + attempt)
        path = _rrt_attempt(start, goal, world, weights, lo, hi, cfg, rng)
        if path is not None:
            return path
    raise PlanningFailed(
        f"planning failed after {cfg.restarts} attempts "
        f"({cfg.time_budget:.1f}s budget each)")


def _rrt_attempt(start, goal, world, weights, lo, hi, cfg, rng):
    ta = _Tree(len(start), 1024, start)
    tb = _Tree(len(start), 1024, goal)
    a_is_start = True
    t0 = time.perf_counter()
    eps = cfg.extend_step

    def extend(tree, q_target):
        near = tree.nearest(q_target, weights)
        q_near = tree.nodes[near]
        diff = q_target - q_near
        d = float(np.linalg.norm(diff * weights))
        if d < 1e-12:
            return None, near
        q_new = q_target if d <= eps else q_near + diff * (eps / d)
        if world.edge_free(q_near, q_new):
            idx = tree.add(q_new, near)
            return q_new, idx
        return None, near

    for it in range(cfg.max_iterations):
        if it % 64 == 0 and time.perf_counter() - t0 > cfg.time_budget:
            return None
        q_rand = rng.uniform(lo, hi)
        q_new, idx_a = extend(ta, q_rand)
        if q_new is not None:
            # greedy connect from the other tree
            while True:
                q_c, idx_b = extend(tb, q_new)
                if q_c is None:
                    break
                if np.linalg.norm((q_c - q_new) * weights) < 1e-9:
                    pa = ta.path_from(idx_a)
                    pb = tb.path_from(idx_b)
                    if a_is_start:
                        return pa + pb[::-1]
                    return pb + pa[::-1]
        ta, tb = tb, ta
        a_is_start = not a_is_start
    return None


def smooth_path(path, scene: Scene, n_links: int, link_length: float,
                cfg: PlannerConfig, rng=None):
    """Randomized shortcutting plus one validated moving-average pass.

    The output is never longer in summed joint-space distance than the input
    and stays collision-free (failed passes revert).
    """
    world = _ChainWorld(scene, n_links, link_length, cfg.link_radius,
                        cfg.clearance, cfg.interp_step)
    rng = rng or np.random.default_rng(cfg.seed)
    path = [np.asarray(p, dtype=np.float64).copy() for p in path]

    def length(p):
        return sum(float(np.linalg.norm(b - a)) for a, b in zip(p, p[1:]))

    for _ in range(cfg.shortcut_iterations):
        if len(path) < 3:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if world.edge_free(path[i], path[j]):
            path = path[:i + 1] + path[j:]

    if len(path) > 2:
        candidate = [path[0]]
        for i in range(1, len(path) - 1):
            candidate.append((path[i - 1] + path[i] + path[i + 1]) / 3.0)
        candidate.append(path[-1])
        ok = all(world.edge_free(a, b) for a, b in zip(candidate, candidate[1:]))
        if ok and length(candidate) <= length(path):
            path = candidate
    return path


# ---------------------------------------------------------------------------
# guidance generation
# ---------------------------------------------------------------------------

def grasp_pose_on_chain(theta, n_links, link_length, offset):
    """Pose at arc-length offset along the chain: position interpolated within
    the containing link, orientation of that link."""
    pts, Rs = chain_fk(theta, n_links, link_length)
    s = min(max(offset / link_length, 0.0), n_links - 1e-9)
    i = min(int(s), n_links - 1)
    t = s - i
    pos = pts[i] + t * (pts[i + 1] - pts[i])
    return Pose(pos, matrix_to_quat(Rs[i]))


def path_to_guidance(path, n_links, link_length, grasp_offsets,
                     v_lin_max, v_ang_max) -> GuidancePath:
    """Timed per-agent waypoints; each segment lasts as long as the slowest
    agent needs under the velocity limits."""
    if v_lin_max <= 0 or v_ang_max <= 0:
        raise ValueError("velocity limits must be positive")
    agents = [[], []]
    for theta in path:
        for a, off in enumerate(grasp_offsets):
            agents[a].append(grasp_pose_on_chain(theta, n_links, link_length, off))
    # drop degenerate segments (identical consecutive waypoints on both agents)
    keep = [0]
    for k in range(1, len(path)):
        moved = False
        for a in range(2):
            if (np.linalg.norm(agents[a][k].position - agents[a][keep[-1]].position) > 1e-12
                    or quat_angle(agents[a][k].orientation,
                                  agents[a][keep[-1]].orientation) > 1e-12):
                moved = True
        if moved or k == len(path) - 1 and len(keep) == 1:
            keep.append(k)
    agents = [[ag[i] for i in keep] for ag in agents]
    times = [0.0]
    for k in range(1, len(keep)):
        dur = 0.0
        for a in range(2):
            lin = float(np.linalg.norm(agents[a][k].position - agents[a][k - 1].position))
            ang = quat_angle(agents[a][k].orientation, agents[a][k - 1].orientation)
            dur = max(dur, lin / v_lin_max, ang / v_ang_max)
        times.append(times[-1] + max(dur, 1e-9))
    return GuidancePath(np.array(times), agents)


def cartesian_path_length(path, n_links, link_length, grasp_offsets) -> float:
    """Per-agent holding-point path length, averaged over agents."""
    total = 0.0
    for off in grasp_offsets:
        poses = [grasp_pose_on_chain(th, n_links, link_length, off) for th in path]
        total += sum(float(np.linalg.norm(b.position - a.position))
                     for a, b in zip(poses, poses[1:]))
    return total / len(grasp_offsets)


# ---------------------------------------------------------------------------
# URDF export
# ---------------------------------------------------------------------------

def export_urdf(n_links: int, link_length: float, radius: float,
                name: str = "dlo_chain") -> str:
    """Chain description: world -> 3 prismatic joints -> per link a cylinder
    with its spherical joint decomposed into X-Y-Z revolute joints."""
    lines = ['<?xml version="1.0"?>', f'<robot name="{name}">',
             '  <link name="world"/>']
    prev = "world"
    for ax, axis in (("x", "1 0 0"), ("y", "0 1 0"), ("z", "0 0 1")):
        link = f"base_{ax}"
        lines += [f'  <link name="{link}"/>',
                  f'  <joint name="base_prismatic_{ax}" type="prismatic">',
                  f'    <parent link="{prev}"/>',
                  f'    <child link="{link}"/>',
                  f'    <axis xyz="{axis}"/>',
                  '    <limit lower="-100" upper="100" effort="0" velocity="1"/>',
                  '  </joint>']
        prev = link
    for i in range(1, n_links + 1):
        for ax, axis in (("x", "1 0 0"), ("y", "0 1 0"), ("z", "0 0 1")):
            child = f"link_{i}" if ax == "z" else f"link_{i}_pre_{ax}"
            lines += [f'  <joint name="spherical_{i}_{ax}" type="revolute">',
                      f'    <parent link="{prev}"/>',
                      f'    <child link="{child}"/>',
                      f'    <axis xyz="{axis}"/>',
                      '    <limit lower="-3.1416" upper="3.1416" effort="0" velocity="1"/>',
                      '  </joint>']
            if ax == "z":
                lines += [f'  <link name="{child}">',
                          '    <visual>',
                          f'      <origin xyz="0 0 {link_length / 2}" rpy="0 0 0"/>',
                          f'      <geometry><cylinder radius="{radius}" length="{link_length}"/></geometry>',
                          '    </visual>',
                          '    <collision>',
                          f'      <origin xyz="0 0 {link_length / 2}" rpy="0 0 0"/>',
                          f'      <geometry><cylinder radius="{radius}" length="{link_length}"/></geometry>',
                          '    </collision>',
                          '  </link>']
            else:
                lines += [f'  <link name="{child}"/>']
            prev = child
        if i > 1:
            lines += [f'  <!-- self-collision disabled for adjacent pair link_{i - 1} / link_{i} -->',
                      f'  <disable_collision link1="link_{i - 1}" link2="link_{i}"/>']
        # next spherical joint hangs off the far end of this link
        if i < n_links:
            lines += [f'  <joint name="link_{i}_end" type="fixed">',
                      f'    <parent link="link_{i}"/>',
                      f'    <child link="link_{i}_tip"/>',
                      f'    <origin xyz="0 0 {link_length}" rpy="0 0 0"/>',
                      '  </joint>',
                      f'  <link name="link_{i}_tip"/>']
            prev = f"link_{i}_tip"
    lines.append('</robot>')
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def plan(scene: Scene, start_state, goal_state, rod_params, grasp_segments,
         cfg: PlannerConfig | None = None) -> PlanResult:
    """Approximate, repair/escalate, plan, smooth, and time-parameterize.

    Auto mode starts at one link and escalates on collision-gating or planner
    failure up to the cap; a fixed n_apr plans exactly once.
    """
    cfg = cfg or PlannerConfig()
    if cfg.link_radius is None:
        cfg = replace(cfg, link_radius=rod_params.radius)
    auto = (cfg.n_apr == "auto")
    n = 1 if auto else int(cfg.n_apr)
    cap = cfg.n_apr_cap if auto else n
    offsets = [(s + 0.5) * rod_params.segment_length for s in grasp_segments]
    stats = {"attempted_n_apr": []}
    t_start = time.perf_counter()
    last_error = None

    while n <= cap:
        stats["attempted_n_apr"].append(n)
        try:
            result = _plan_at(scene, start_state, goal_state, rod_params,
                              offsets, n, cfg, stats)
            stats["total_time"] = time.perf_counter() - t_start
            return result
        except (PlanningFailed, IKSingular) as e:
            last_error = e
            n += 1
    if isinstance(last_error, PlanningFailed) and not isinstance(last_error, GatingFailed):
        raise last_error
    raise ApproximationFailed(
        f"approximation failed: no collision-free states up to n_apr={cap} "
        f"(last error: {last_error})")


def _plan_at(scene, start_state, goal_state, rod_params, offsets, n, cfg, stats):
    l_apr = rod_params.length / n
    t0 = time.perf_counter()
    apr_s = approximate_rod(start_state, n)
    apr_g = approximate_rod(goal_state, n)
    err_s = approximation_error(start_state, apr_s)
    err_g = approximation_error(goal_state, apr_g)
    t_approx = time.perf_counter() - t0

    t0 = time.perf_counter()
    repaired = []
    for apr in (apr_s, apr_g):
        theta = chain_ik(apr)
        pens = check_state_collision(theta, scene, n, l_apr, cfg.link_radius)
        if pens:
            max_depth = max(p[1] for p in pens)
            if max_depth > cfg.depth_threshold:
                raise GatingFailed(
                    f"state collision depth {max_depth:.3f} exceeds threshold at n_apr={n}")
            fixed = repair_state(apr, scene, cfg.link_radius, cfg.repair_shift_cap)
            if fixed is None:
                raise GatingFailed(f"state repair failed at n_apr={n}")
            apr = fixed
        repaired.append(apr)
    apr_s, apr_g = repaired
    theta_s = chain_ik(apr_s)
    theta_g = chain_ik(apr_g)
    t_gate = time.perf_counter() - t0

    t0 = time.perf_counter()
    raw = plan_rrt_connect(theta_s, theta_g, scene, n, l_apr, cfg)
    t_plan = time.perf_counter() - t0

    t0 = time.perf_counter()
    smoothed = smooth_path(raw, scene, n, l_apr, cfg,
                           rng=np.random.default_rng(cfg.seed + 1000))
    t_smooth = time.perf_counter() - t0

    guidance = path_to_guidance(smoothed, n, l_apr, offsets,
                                cfg.v_lin_max, cfg.v_ang_max)
    stats.update({
        "n_apr": n,
        "approx_error_start": err_s,
        "approx_error_goal": err_g,
        "time_approximation": t_approx,
        "time_gating": t_gate,
        "time_planning": t_plan,
        "time_smoothing": t_smooth,
        "raw_path_length": cartesian_path_length(raw, n, l_apr, offsets),
        "smoothed_path_length": cartesian_path_length(smoothed, n, l_apr, offsets),
        "waypoints": len(smoothed),
    })
    return PlanResult(guidance=guidance, approx_start=apr_s, approx_goal=apr_g,
                      joint_path=smoothed, stats=stats,
                      urdf=export_urdf(n, l_apr, cfg.link_radius))
