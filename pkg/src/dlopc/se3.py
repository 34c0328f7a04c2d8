"""Quaternion / rotation algebra shared by the simulator, planner, and controller.

Conventions:
    - Quaternions are scalar-first [w, x, y, z] float64 arrays of unit norm.
    - q and -q encode the same rotation; canonical storage uses w >= 0
      (tie-break x >= 0, then y, then z) so serialized logs are reproducible.
    - rot(k, theta) rotates by the right-hand rule about unit axis k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS = 1e-12

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < EPS:
        raise ValueError("cannot normalize near-zero quaternion")
    return np.asarray(q, dtype=np.float64) / n


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Fix the sign ambiguity: w >= 0, ties broken by x, then y, then z."""
    q = np.asarray(q, dtype=np.float64)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    return q.copy()


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b (scalar-first)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate 3-vector v by unit quaternion q."""
    qv = np.asarray(q[1:4])
    t = 2.0 * np.cross(qv, v)
    return np.asarray(v) + q[0] * t + np.cross(qv, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix -> canonical unit quaternion (Shepperd's branching)."""
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * math.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    return quat_canonical(quat_normalize(q))


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < EPS:
        return IDENTITY_QUAT.copy()
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))


def quat_exp(w: np.ndarray) -> np.ndarray:
    """Rotation-vector (axis*angle) -> unit quaternion."""
    w = np.asarray(w, dtype=np.float64)
    angle = np.linalg.norm(w)
    if angle < EPS:
        return quat_normalize(np.concatenate(([1.0], 0.5 * w)))
    return quat_from_axis_angle(w / angle, angle)


def quat_log(q: np.ndarray) -> np.ndarray:
    """Unit quaternion -> rotation vector, angle in [0, pi]."""
    return matrix_log(quat_to_matrix(q))


def rot(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix about unit axis by angle (Euler-Rodrigues)."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def matrix_log(R: np.ndarray) -> np.ndarray:
    """Rotation log map: R -> axis*angle, angle in [0, pi].

    At angle == pi the axis sign is ambiguous; the lexicographically larger
    of {a, -a} is returned so the map is a total function.
    """
    R = np.asarray(R, dtype=np.float64)
    cos_t = max(-1.0, min(1.0, 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)))
    sin_vec = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = np.linalg.norm(sin_vec)
    angle = math.atan2(sin_t, cos_t)
    if sin_t > 1e-9 and math.pi - angle > 1e-6:
        return sin_vec * (angle / sin_t)
    if angle < 1e-9:
        return sin_vec  # first-order: R ~ I + skew(w)
    # angle ~ pi: recover axis from the symmetric part, then fix the sign.
    B = 0.5 * (R + np.eye(3))
    axis = np.sqrt(np.maximum(np.diag(B), 0.0))
    k = int(np.argmax(axis))
    for i in range(3):
        if i != k and axis[i] > 1e-12:
            axis[i] = math.copysign(axis[i], B[k, i] * axis[k])
    axis = axis / np.linalg.norm(axis)
    for c in axis:
        if c > 0.0:
            break
        if c < 0.0:
            axis = -axis
            break
    return axis * angle


def rotation_error(R_desired: np.ndarray, R_actual: np.ndarray) -> np.ndarray:
    """Minimal rotation error sigma(R_desired^T R_actual) as an axis*angle 3-vector."""
    return matrix_log(np.asarray(R_desired).T @ np.asarray(R_actual))


def quat_rotation_error(q_desired: np.ndarray, q_actual: np.ndarray) -> np.ndarray:
    return rotation_error(quat_to_matrix(q_desired), quat_to_matrix(q_actual))


def quat_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    """Geodesic angle between two rotations, in [0, pi]."""
    d = abs(float(np.dot(qa, qb)))
    return 2.0 * math.acos(min(1.0, d))


def jacobi_eigh4(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigen-decomposition of a symmetric 4x4 matrix.

    Returns (eigenvalues, eigenvectors-as-columns), unsorted. Dependency-free
    on purpose: the dense eigensolver stays available as an independent test
    oracle for the quaternion average.
    """
    A = np.array(A, dtype=np.float64)
    V = np.eye(4)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(3):
            for q in range(p + 1, 4):
                off += A[p, q] * A[p, q]
        if off < tol * tol:
            break
        for p in range(3):
            for q in range(p + 1, 4):
                if abs(A[p, q]) < tol * 1e-4:
                    continue
                theta = 0.5 * (A[q, q] - A[p, p]) / A[p, q]
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(4)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    return np.diag(A).copy(), V


def average_quaternions(quats, weights=None) -> np.ndarray:
    """Weighted rotation average via Markley's eigenvector method.

    Builds the weighted outer-product accumulator sum(w_i q_i q_i^T) and
    returns its dominant unit eigenvector, sign-canonicalized. Invariant to
    per-input sign flips because q q^T == (-q)(-q)^T.

    Args:
        quats: sequence of unit quaternions [w, x, y, z].
        weights: optional nonnegative weights; equal weights when omitted.
    """
    quats = [np.asarray(q, dtype=np.float64) for q in quats]
    if len(quats) == 0:
        raise ValueError("average_quaternions requires at least one quaternion")
    if weights is None:
        weights = np.ones(len(quats))
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(quats):
        raise ValueError("weights length must match quats")
    if np.any(weights < 0.0):
        raise ValueError("weights must be nonnegative")
    wsum = float(np.sum(weights))
    if wsum <= 0.0:
        raise ValueError("weight sum must be positive")
    M = np.zeros((4, 4))
    for w, q in zip(weights, quats):
        M += (w / wsum) * np.outer(q, q)
    vals, vecs = jacobi_eigh4(M)
    q = vecs[:, int(np.argmax(vals))]
    return quat_canonical(quat_normalize(q))


def subproblem1(axis: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    """Angle theta in (-pi, pi] with rot(axis, theta) @ p == q.

    Requires p and q to share their projection on the axis and the norm of
    their perpendicular components (within 1e-7).
    """
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    pp = p - np.dot(p, axis) * axis
    qp = q - np.dot(q, axis) * axis
    np_, nq = np.linalg.norm(pp), np.linalg.norm(qp)
    if np_ < 1e-9 or nq < 1e-9:
        raise ValueError("axis-aligned input")
    if abs(np.dot(p, axis) - np.dot(q, axis)) > 1e-7 or abs(np_ - nq) > 1e-7:
        raise ValueError("subproblem1 inputs are not related by a rotation about the axis")
    ep, eq = pp / np_, qp / nq
    s = float(np.dot(axis, np.cross(ep, eq)))
    c = float(np.dot(ep, eq))
    theta = math.atan2(s, c)
    if theta <= -math.pi + 1e-15:
        theta = math.pi
    return theta


def subproblem2(axis1: np.ndarray, axis2: np.ndarray, p: np.ndarray, q: np.ndarray):
    """Solve rot(axis1, t1) @ rot(axis2, t2) @ p == q for up to two (t1, t2) pairs.

    Axes intersect at the origin and must not be parallel. Returns a list of
    solutions; an empty list means the rotation cones do not intersect.
    """
    k1 = np.asarray(axis1, dtype=np.float64)
    k2 = np.asarray(axis2, dtype=np.float64)
    k1 = k1 / np.linalg.norm(k1)
    k2 = k2 / np.linalg.norm(k2)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    k12 = float(np.dot(k1, k2))
    if abs(1.0 - k12 * k12) < 1e-12:
        raise ValueError("subproblem2 axes must not be parallel")
    if abs(np.linalg.norm(p) - np.linalg.norm(q)) > 1e-7:
        raise ValueError("subproblem2 requires |p| == |q|")
    pk = float(np.dot(p, k2))
    qk = float(np.dot(q, k1))
    denom = k12 * k12 - 1.0
    a = (k12 * pk - qk) / denom
    b = (k12 * qk - pk) / denom
    # c lies on both cones: c = a*k1 + b*k2 + g*(k1 x k2)
    cross = np.cross(k1, k2)
    g2 = (float(np.dot(p, p)) - a * a - b * b - 2.0 * a * b * k12) / float(np.dot(cross, cross))
    if g2 < -1e-9:
        return []
    sols = []
    gammas = [0.0] if g2 < 1e-14 else [math.sqrt(g2), -math.sqrt(g2)]
    for g in gammas:
        c = a * k1 + b * k2 + g * cross
        try:
            t2 = subproblem1(k2, p, c)
            t1 = -subproblem1(k1, q, c)
        except ValueError:
            # c aligned with an axis: that axis' angle is free; pick zero.
            t2 = 0.0 if np.linalg.norm(np.cross(k2, p)) < 1e-9 else subproblem1(k2, p, c)
            t1 = 0.0 if np.linalg.norm(np.cross(k1, q)) < 1e-9 else -subproblem1(k1, q, c)
        sols.append((t1, t2))
    return sols


@dataclass
class Pose:
    """Rigid pose: world position (m) and canonical unit quaternion."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).copy()
        self.orientation = quat_canonical(quat_normalize(np.asarray(self.orientation, dtype=np.float64)))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def transform(self, point: np.ndarray) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, point)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())


@dataclass
class Twist:
    """Spatial velocity: linear (m/s) and angular (rad/s) parts, world frame."""

    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @staticmethod
    def from_array(u: np.ndarray) -> "Twist":
        u = np.asarray(u, dtype=np.float64)
        return Twist(u[:3].copy(), u[3:6].copy())
