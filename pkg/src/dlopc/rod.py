"""Position-based-dynamics rod: substepped XPBD with zero-stretch bend/twist
joints, contact handling, holder wrench extraction, settling, and sim-to-sim
stiffness identification.

The rod is N equal rigid cylinder segments. Adjacent segments share an
endpoint through a hard (zero compliance) positional constraint; the elastic
part is a per-joint XPBD rotation constraint with stiffness (EI/l, EI/l, GJ/l)
about the local x, y (bending) and z (twist) axes, which makes the discrete
chain converge to Euler-Bernoulli behavior. Grasped segments are kinematic
boundary conditions (zero inverse mass) driven to their target poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .sdf import Scene, min_distances
from .se3 import Pose, quat_rotate, matrix_to_quat


class SimulationDiverged(RuntimeError):
    def __init__(self, substep: int):
        super().__init__(f"simulation diverged at substep {substep}")
        self.substep = substep


class SettleError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"settle did not converge; residual speed {residual:.3e} m/s")
        self.residual = residual


class IdentificationStalled(RuntimeError):
    pass


@dataclass
class RodParams:
    """Geometry and material of the rod."""

    length: float
    segments: int
    radius: float
    density: float
    youngs_modulus: float
    shear_modulus: float
    damping_linear: float = 60.0
    damping_angular: float = 60.0
    gravity: float = 9.804

    def __post_init__(self):
        if min(self.length, self.radius, self.density,
               self.youngs_modulus, self.shear_modulus) <= 0:
            raise ValueError("rod dimensions and moduli must be positive")
        if self.segments < 2:
            raise ValueError("rod needs at least 2 segments")

    @property
    def segment_length(self) -> float:
        return self.length / self.segments

    @property
    def segment_mass(self) -> float:
        return self.density * math.pi * self.radius ** 2 * self.segment_length

    @property
    def total_mass(self) -> float:
        return self.segment_mass * self.segments

    @property
    def area_moment(self) -> float:
        return math.pi * self.radius ** 4 / 4.0

    @property
    def polar_moment(self) -> float:
        return math.pi * self.radius ** 4 / 2.0

    def joint_stiffness(self) -> np.ndarray:
        """Per-joint rotational stiffness (N*m/rad): bend, bend, twist."""
        l = self.segment_length
        ei = self.youngs_modulus * self.area_moment
        gj = self.shear_modulus * self.polar_moment
        return np.array([ei / l, ei / l, gj / l])

    @property
    def stretch_stiffness(self) -> float:
        """Axial joint stiffness EA/l (N/m); near-rigid endpoint coincidence."""
        area = math.pi * self.radius ** 2
        return self.youngs_modulus * area / self.segment_length

    def body_inertia(self) -> np.ndarray:
        """Diagonal body-frame inertia of one solid cylinder segment."""
        m = self.segment_mass
        r, l = self.radius, self.segment_length
        it = m * (3 * r * r + l * l) / 12.0
        return np.array([it, it, m * r * r / 2.0])


@dataclass
class RodState:
    positions: np.ndarray        # (N, 3)
    orientations: np.ndarray     # (N, 4) unit, scalar-first
    velocities: np.ndarray       # (N, 3)
    angular_velocities: np.ndarray  # (N, 3)
    segment_length: float

    def copy(self) -> "RodState":
        return RodState(self.positions.copy(), self.orientations.copy(),
                        self.velocities.copy(), self.angular_velocities.copy(),
                        self.segment_length)

    @property
    def n_segments(self) -> int:
        return self.positions.shape[0]

    def segment_endpoints(self):
        half = 0.5 * self.segment_length
        e = np.array([quat_rotate(qi, [0, 0, half]) for qi in self.orientations])
        return self.positions - e, self.positions + e

    def tip_poses(self):
        """Poses of the two rod endpoints (tip frames = end segment frames)."""
        a, b = self.segment_endpoints()
        return (Pose(a[0], self.orientations[0]),
                Pose(b[-1], self.orientations[-1]))

    def max_speed(self) -> float:
        half = 0.5 * self.segment_length
        lin = np.linalg.norm(self.velocities, axis=1)
        ang = np.linalg.norm(self.angular_velocities, axis=1)
        return float(np.max(lin + ang * half))

    def total_length(self) -> float:
        a, b = self.segment_endpoints()
        inner = np.linalg.norm(a[1:] - b[:-1], axis=1)
        return float(np.sum(np.linalg.norm(b - a, axis=1)))


@dataclass
class Attachment:
    agent: int          # 1 or 2
    segment: int
    target: Pose = field(default_factory=Pose)


@dataclass
class SimConfig:
    dt: float = 1.0 / 30.0
    substeps: int = 30
    solver_steps: int = 1
    contact_margin: float = 0.001
    report_proximity: float = math.inf

    def __post_init__(self):
        if self.dt <= 0 or self.substeps < 1 or self.solver_steps < 1:
            raise ValueError("dt > 0, substeps >= 1, solver_steps >= 1 required")

    @property
    def h(self) -> float:
        return self.dt / self.substeps


def straight_state(params: RodParams, start, direction, up_hint=(0, 0, 1)) -> RodState:
    """Straight rod from `start` along unit `direction` (segment z-axes aligned)."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    up = np.asarray(up_hint, dtype=np.float64)
    if abs(np.dot(up, d)) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    xaxis = np.cross(up, d)
    xaxis /= np.linalg.norm(xaxis)
    yaxis = np.cross(d, xaxis)
    q = matrix_to_quat(np.column_stack([xaxis, yaxis, d]))
    l = params.segment_length
    n = params.segments
    start = np.asarray(start, dtype=np.float64)
    centers = np.array([start + d * l * (i + 0.5) for i in range(n)])
    return RodState(centers, np.tile(q, (n, 1)),
                    np.zeros((n, 3)), np.zeros((n, 3)), l)


def arc_state(params: RodParams, tip_a, tip_b, bulge="down") -> RodState:
    """Circular-arc rod of full length between two tip points.

    The arc lies in the vertical plane through the tips; `bulge` picks whether
    the middle sits above ("up", an arch) or below ("down", a U) the chord.
    Chord length must be < rod length.
    """
    pa = np.asarray(tip_a, dtype=np.float64)
    pb = np.asarray(tip_b, dtype=np.float64)
    chord = float(np.linalg.norm(pb - pa))
    L = params.length
    if chord >= L:
        return straight_state(params, pa, (pb - pa) / chord)
    # solve sin(x)/x = chord/L for the half arc angle
    lo, hi = 1e-9, math.pi - 1e-9
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.sin(mid) / mid > chord / L:
            lo = mid
        else:
            hi = mid
    xang = 0.5 * (lo + hi)
    R = L / (2.0 * xang)
    ex = (pb - pa) / chord
    ez = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(ex, ez)) > 0.99:
        ez = np.array([1.0, 0.0, 0.0])
    ey = np.cross(ez, ex)
    ey /= np.linalg.norm(ey)
    ezp = np.cross(ex, ey)
    sign = -1.0 if bulge == "up" else 1.0
    l = params.segment_length
    n = params.segments
    centers = np.zeros((n, 3))
    quats = np.zeros((n, 4))
    # walk the chain along mid-arc tangents so consecutive endpoints coincide
    p = pa.copy()
    for i in range(n):
        s_mid = (i + 0.5) * l
        phi = -xang + 2.0 * xang * (s_mid / L)
        tangent = math.cos(phi) * ex + sign * math.sin(phi) * ezp
        tangent = tangent / np.linalg.norm(tangent)
        centers[i] = p + 0.5 * l * tangent
        zax = tangent
        yax = ey
        xax = np.cross(yax, zax)
        quats[i] = matrix_to_quat(np.column_stack([xax, yax, zax]))
        p = p + l * tangent
    return RodState(centers, quats, np.zeros((n, 3)), np.zeros((n, 3)), l)


def preset_state(params: RodParams, shape: str, **kw) -> RodState:
    """Named initial shapes: straight | U | N | M."""
    shape = shape.lower()
    if shape == "straight":
        return straight_state(params, kw["start"], kw["direction"])
    if shape in ("u", "n"):
        return arc_state(params, kw["tip_a"], kw["tip_b"],
                         bulge="down" if shape == "u" else "up")
    if shape == "m":
        # slack start for soft rods; settling under gravity produces the
        # pronounced double-droop profile
        return arc_state(params, kw["tip_a"], kw["tip_b"], bulge="down")
    raise ValueError(f"unknown preset shape '{shape}' (straight|U|N|M)")


class RodSim:
    """Single-writer simulation instance; clone() for independent copies."""

    def __init__(self, params: RodParams, state: RodState, attachments,
                 scene: Scene | None = None, config: SimConfig | None = None):
        self.params = params
        self.config = config or SimConfig()
        self.scene = scene if scene is not None else Scene([])
        self.attachments = sorted((a for a in attachments), key=lambda a: a.agent)
        segs = [a.segment for a in self.attachments]
        if len(set(segs)) != len(segs):
            raise ValueError("attachments must reference distinct segments")
        n = params.segments
        for s in segs:
            if not 0 <= s < n:
                raise ValueError(f"attachment segment {s} out of range")
        if state.n_segments != n:
            raise ValueError("state segment count does not match params")

        self.x = np.ascontiguousarray(state.positions, dtype=np.float64).copy()
        self.q = np.ascontiguousarray(state.orientations, dtype=np.float64).copy()
        self.v = np.ascontiguousarray(state.velocities, dtype=np.float64).copy()
        self.w = np.ascontiguousarray(state.angular_velocities, dtype=np.float64).copy()

        self.inv_m = np.full(n, 1.0 / params.segment_mass)
        inertia = params.body_inertia()
        self.inv_ia = np.full(n, 1.0 / inertia[0])
        self.inv_ib = np.full(n, 1.0 / inertia[1])
        self.inv_ic = np.full(n, 1.0 / inertia[2])
        self.mass = np.full(n, params.segment_mass)
        self.att_seg = np.array(segs, dtype=np.int64)
        for s in segs:
            self.inv_m[s] = 0.0
            self.inv_ia[s] = 0.0
            self.inv_ib[s] = 0.0
            self.inv_ic[s] = 0.0
        # attachments start at the segment's current pose
        for a in self.attachments:
            a.target = Pose(self.x[a.segment].copy(), self.q[a.segment].copy())

        self.k_bend = params.joint_stiffness()
        self._lam_s = np.zeros((n - 1, 3))
        self._lam_b = np.zeros((n - 1, 3))
        self._wrench = np.zeros((len(segs), 6))
        self._contact_buf = np.zeros((max(1, n * max(1, len(self.scene.obstacles)) * 5), 6))
        self._x_prev = np.zeros((n, 3))
        self._q_prev = np.zeros((n, 4))
        self.ticks = 0

    # -- state access -----------------------------------------------------

    @property
    def state(self) -> RodState:
        return RodState(self.x.copy(), self.q.copy(), self.v.copy(), self.w.copy(),
                        self.params.segment_length)

    def holding_poses(self):
        return [Pose(self.x[a.segment].copy(), self.q[a.segment].copy())
                for a in self.attachments]

    def tip_poses(self):
        return self.state.tip_poses()

    def clone(self) -> "RodSim":
        other = RodSim(self.params, self.state, [replace(a, target=a.target.copy())
                                                 for a in self.attachments],
                       self.scene, self.config)
        return other

    # -- dynamics ----------------------------------------------------------

    def step(self, targets=None):
        """Advance one control period toward per-agent attachment targets.

        Returns (wrench, reports): the 12-vector of per-agent holder wrenches
        (F1, T1, F2, T2; force the holder exerts on the rod, substep-averaged)
        and the per-obstacle minimum distance reports computed at the start of
        the period.
        """
        reports = min_distances(self.scene, self.state, self.params.radius,
                                self.config.report_proximity)
        self.run_substeps_raw(self.config.substeps, targets)
        self.ticks += 1
        return self.wrench_vector(), reports

    def run_substeps_raw(self, n_substeps: int, targets=None):
        """Advance n_substeps without the min-distance reporting pass.

        Used by the Jacobian bank's auxiliary simulations where distances are
        measured separately at the end.
        """
        A = len(self.attachments)
        att_x0 = np.zeros((A, 3))
        att_q0 = np.zeros((A, 4))
        att_x1 = np.zeros((A, 3))
        att_q1 = np.zeros((A, 4))
        if targets is not None:
            for a, t in zip(self.attachments, targets):
                a.target = t.copy()
        for k, a in enumerate(self.attachments):
            att_x0[k] = self.x[a.segment]
            att_q0[k] = self.q[a.segment]
            att_x1[k] = a.target.position
            att_q1[k] = a.target.orientation
        status = K.run_substeps(
            n_substeps, self.config.solver_steps, self.config.h,
            self.x, self.q, self.v, self.w,
            self.inv_m, self.inv_ia, self.inv_ib, self.inv_ic, self.mass,
            0.5 * self.params.segment_length, self.params.radius,
            self.params.stretch_stiffness,
            self.k_bend[0], self.k_bend[1], self.k_bend[2],
            self.params.damping_linear, self.params.damping_angular,
            -self.params.gravity,
            self.att_seg, att_x0, att_q0, att_x1, att_q1,
            self.scene.kinds, self.scene.oq, self.scene.ot, self.scene.par, self.scene.aabb,
            self.config.contact_margin,
            self._lam_s, self._lam_b, self._wrench,
            self._contact_buf, self._x_prev, self._q_prev)
        if status != 0:
            raise SimulationDiverged(status - 1)

    def wrench_vector(self) -> np.ndarray:
        out = np.zeros(12)
        for k in range(len(self.attachments)):
            out[6 * k: 6 * k + 6] = self._wrench[k]
        return out

    def settle(self, tolerance: float = 1e-3, max_substeps: int = 10000):
        """Step with attachments held until max endpoint speed < tolerance."""
        if tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        done = 0
        wrench = self.wrench_vector()
        while done < max_substeps:
            wrench, _ = self.step()
            done += self.config.substeps
            if self.state.max_speed() < tolerance:
                return wrench
        residual = self.state.max_speed()
        if residual >= tolerance:
            raise SettleError(residual)
        return wrench


def settle(params, state, attachments, scene, config, tolerance=1e-3) -> RodState:
    """Convenience wrapper: settle a state to quasi-static equilibrium."""
    sim = RodSim(params, state, attachments, scene, config)
    sim.settle(tolerance)
    return sim.state


# ---------------------------------------------------------------------------
# sim-to-sim parameter identification
# ---------------------------------------------------------------------------

def drive_to_poses(sim: RodSim, poses, max_move: float = 0.02, max_turn: float = 0.1):
    """Walk attachments to target poses in small increments (no teleporting)."""
    from .se3 import quat_angle
    cur = sim.holding_poses()
    steps = 1
    for c, t in zip(cur, poses):
        lin = float(np.linalg.norm(t.position - c.position))
        ang = quat_angle(c.orientation, t.orientation)
        steps = max(steps, int(math.ceil(lin / max_move)), int(math.ceil(ang / max_turn)))
    for k in range(1, steps + 1):
        frac = k / steps
        targets = []
        for c, t in zip(cur, poses):
            pos = c.position + frac * (t.position - c.position)
            d = float(np.dot(c.orientation, t.orientation))
            qb = t.orientation if d >= 0 else -t.orientation
            ang = math.acos(min(1.0, abs(d)))
            if ang < 1e-9:
                qi = qb
            else:
                w0 = math.sin((1 - frac) * ang) / math.sin(ang)
                w1 = math.sin(frac * ang) / math.sin(ang)
                qi = w0 * c.orientation + w1 * qb
            targets.append(Pose(pos, qi))
        sim.step(targets)


def simulate_settled_trajectory(params, attachments, poses_list, scene=None,
                                config=None, settle_tol=2e-3):
    """Drive attachments through a waypoint sequence, settling at each one.

    Returns the list of settled feature-point arrays (N, 3); this is also the
    forward model used by identify_moduli, so recorded observations and the
    identification replay share one protocol.
    """
    scene = scene if scene is not None else Scene([])
    config = config or SimConfig()
    state = straight_pose_guess(params, poses_list[0], attachments)
    sim = RodSim(params, state, [replace(a) for a in attachments], scene, config)
    out = []
    for poses in poses_list:
        drive_to_poses(sim, poses)
        sim.settle(settle_tol)
        out.append(sim.x.copy())
    return out


def _trajectory_loss(params, attachments, scene, config, observations,
                     E, G, settle_tol):
    p = replace(params, youngs_modulus=E, shear_modulus=G)
    feats = simulate_settled_trajectory(
        p, attachments, [poses for poses, _ in observations], scene, config, settle_tol)
    loss = 0.0
    for sim_x, (_, obs_x) in zip(feats, observations):
        diff = sim_x - obs_x
        loss += float(np.mean(np.sum(diff * diff, axis=1)))
    return loss / len(observations)


def straight_pose_guess(params, poses, attachments):
    """Straight initial state through the first two holding points."""
    a0, a1 = attachments[0], attachments[1]
    p0, p1 = poses[0].position, poses[1].position
    d = p1 - p0
    n = np.linalg.norm(d)
    if n < 1e-9:
        d = np.array([1.0, 0.0, 0.0])
        n = 1.0
    d = d / n
    arc = (a1.segment - a0.segment) * params.segment_length
    scale = n / arc if arc > 0 else 1.0
    start = p0 - d * (a0.segment + 0.5) * params.segment_length * scale
    return straight_state(params, start, d)


def identify_moduli(params, observations, attachments, guess_E, guess_G,
                    scene=None, config=None, settle_tol=2e-3,
                    fd_step=0.05, max_iters=200, rel_tol=1e-4, stall_limit=20):
    """Recover (E, G) by log-space gradient descent on feature-point error.

    observations: sequence of (holding poses, settled positions (N,3)) along a
    recorded trajectory. Gradients come from central finite differences in
    log-parameter space; a flat loss (bending-free data) stalls out with
    IdentificationStalled rather than returning an arbitrary answer.
    """
    scene = scene if scene is not None else Scene([])
    config = config or SimConfig()
    theta = np.log(np.array([guess_E, guess_G], dtype=np.float64))

    def loss_at(th):
        return _trajectory_loss(params, attachments, scene, config, observations,
                                math.exp(th[0]), math.exp(th[1]), settle_tol)

    f0 = loss_at(theta)
    stall = 0
    for _ in range(max_iters):
        grad = np.zeros(2)
        probes = []
        for k in range(2):
            tp = theta.copy()
            tp[k] += fd_step
            fp = loss_at(tp)
            tm = theta.copy()
            tm[k] -= fd_step
            fm = loss_at(tm)
            grad[k] = (fp - fm) / (2 * fd_step)
            probes.extend([fp, fm])
        curvature_seen = any(p > f0 + 1e-14 + 1e-9 * f0 for p in probes)
        gn = np.linalg.norm(grad)
        improved = False
        f_new = f0
        if gn > 0:
            direction = -grad / gn
            step = 0.4
            for _ in range(7):
                trial = theta + step * direction
                ft = loss_at(trial)
                if ft < f0:
                    theta = trial
                    f_new = ft
                    improved = True
                    break
                step *= 0.5
        if improved:
            stall = 0
            rel = (f0 - f_new) / max(f0, 1e-30)
            f0 = f_new
            if rel < rel_tol:
                return math.exp(theta[0]), math.exp(theta[1])
        else:
            if curvature_seen:
                # sitting at a minimum the probes can see: converged
                return math.exp(theta[0]), math.exp(theta[1])
            stall += 1
            if stall >= stall_limit:
                raise IdentificationStalled(
                    "identification stalled: loss is flat under parameter changes")
    return math.exp(theta[0]), math.exp(theta[1])
