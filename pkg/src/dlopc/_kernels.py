"""Numba inner loops for the rod simulator and distance queries.

Everything here operates on flat float64 arrays so clones are plain copies
and auxiliary simulations can run back to back without Python overhead.
Quaternions are scalar-first. Obstacle poses are (quat, position); shape
parameters live in a fixed-width params row per obstacle:

    kind 0 box:        params = (hx, hy, hz, -)      half extents, local frame
    kind 1 sphere:     params = (r, -, -, -)
    kind 2 capsule:    params = (r, hl, -, -)        axis = local z
    kind 3 cylinder:   params = (r, hl, -, -)        axis = local z
    kind 4 half-space: params = (nx, ny, nz, offset) world frame, free side n.p >= offset

All loops run in a fixed order; no RNG, no wall clock, so identical inputs
produce bit-identical trajectories.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_BOX = 0
KIND_SPHERE = 1
KIND_CAPSULE = 2
KIND_CYLINDER = 3
KIND_HALFSPACE = 4

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# small vector / quaternion helpers (tuples stay in registers)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _cross(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@njit(cache=True, inline="always")
def _qrot(qw, qx, qy, qz, vx, vy, vz):
    """Rotate vector by unit quaternion."""
    tx, ty, tz = _cross(qx, qy, qz, vx, vy, vz)
    tx, ty, tz = 2.0 * tx, 2.0 * ty, 2.0 * tz
    cx, cy, cz = _cross(qx, qy, qz, tx, ty, tz)
    return vx + qw * tx + cx, vy + qw * ty + cy, vz + qw * tz + cz


@njit(cache=True, inline="always")
def _qrot_inv(qw, qx, qy, qz, vx, vy, vz):
    return _qrot(qw, -qx, -qy, -qz, vx, vy, vz)


@njit(cache=True, inline="always")
def _qmul(aw, ax, ay, az, bw, bx, by, bz):
    return (aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw)


@njit(cache=True, inline="always")
def _inv_inertia_apply(qw, qx, qy, qz, ia, ib, ic, vx, vy, vz):
    """World-frame I^-1 v for a body with diagonal body-frame inverse inertia."""
    lx, ly, lz = _qrot_inv(qw, qx, qy, qz, vx, vy, vz)
    return _qrot(qw, qx, qy, qz, ia * lx, ib * ly, ic * lz)


@njit(cache=True, inline="always")
def _apply_ang(q, i, dx, dy, dz):
    """q_i += 0.5 * [0, dtheta] * q_i, then renormalize."""
    w, x, y, z = q[i, 0], q[i, 1], q[i, 2], q[i, 3]
    nw = -dx * x - dy * y - dz * z
    nx = dx * w + dy * z - dz * y
    ny = -dx * z + dy * w + dz * x
    nz = dx * y - dy * x + dz * w
    w += 0.5 * nw
    x += 0.5 * nx
    y += 0.5 * ny
    z += 0.5 * nz
    inv = 1.0 / math.sqrt(w * w + x * x + y * y + z * z)
    q[i, 0] = w * inv
    q[i, 1] = x * inv
    q[i, 2] = y * inv
    q[i, 3] = z * inv


# ---------------------------------------------------------------------------
# signed distance primitives
# ---------------------------------------------------------------------------

@njit(cache=True)
def _obstacle_sdf(kind, oq, ot, par, px, py, pz):
    if kind == KIND_HALFSPACE:
        return par[0] * px + par[1] * py + par[2] * pz - par[3]
    lx, ly, lz = _qrot_inv(oq[0], oq[1], oq[2], oq[3], px - ot[0], py - ot[1], pz - ot[2])
    if kind == KIND_SPHERE:
        return math.sqrt(lx * lx + ly * ly + lz * lz) - par[0]
    if kind == KIND_CAPSULE:
        zc = min(max(lz, -par[1]), par[1])
        dz = lz - zc
        return math.sqrt(lx * lx + ly * ly + dz * dz) - par[0]
    if kind == KIND_CYLINDER:
        dr = math.sqrt(lx * lx + ly * ly) - par[0]
        dz = abs(lz) - par[1]
        dro = max(dr, 0.0)
        dzo = max(dz, 0.0)
        return min(max(dr, dz), 0.0) + math.sqrt(dro * dro + dzo * dzo)
    # box
    ax = abs(lx) - par[0]
    ay = abs(ly) - par[1]
    az = abs(lz) - par[2]
    ox = max(ax, 0.0)
    oy = max(ay, 0.0)
    oz = max(az, 0.0)
    return min(max(ax, max(ay, az)), 0.0) + math.sqrt(ox * ox + oy * oy + oz * oz)


@njit(cache=True)
def _obstacle_grad(kind, oq, ot, par, px, py, pz):
    """Outward unit gradient; analytic for smooth shapes, central FD elsewhere."""
    if kind == KIND_HALFSPACE:
        return par[0], par[1], par[2]
    if kind == KIND_SPHERE:
        dx, dy, dz = px - ot[0], py - ot[1], pz - ot[2]
        n = math.sqrt(dx * dx + dy * dy + dz * dz)
        if n < 1e-12:
            return 0.0, 0.0, 1.0
        return dx / n, dy / n, dz / n
    if kind == KIND_CAPSULE:
        lx, ly, lz = _qrot_inv(oq[0], oq[1], oq[2], oq[3], px - ot[0], py - ot[1], pz - ot[2])
        zc = min(max(lz, -par[1]), par[1])
        dx, dy, dz = lx, ly, lz - zc
        n = math.sqrt(dx * dx + dy * dy + dz * dz)
        if n < 1e-12:
            return 0.0, 0.0, 1.0
        return _qrot(oq[0], oq[1], oq[2], oq[3], dx / n, dy / n, dz / n)
    # box / cylinder: central finite differences, step 1e-6
    e = 1e-6
    gx = (_obstacle_sdf(kind, oq, ot, par, px + e, py, pz)
          - _obstacle_sdf(kind, oq, ot, par, px - e, py, pz))
    gy = (_obstacle_sdf(kind, oq, ot, par, px, py + e, pz)
          - _obstacle_sdf(kind, oq, ot, par, px, py - e, pz))
    gz = (_obstacle_sdf(kind, oq, ot, par, px, py, pz + e)
          - _obstacle_sdf(kind, oq, ot, par, px, py, pz - e))
    n = math.sqrt(gx * gx + gy * gy + gz * gz)
    if n < 1e-12:
        return 0.0, 0.0, 1.0
    return gx / n, gy / n, gz / n


@njit(cache=True)
def scene_point_sdf(kinds, oq, ot, par, px, py, pz):
    """Minimum signed distance over all obstacles. Returns (dist, index)."""
    best = 1e30
    idx = -1
    for m in range(kinds.shape[0]):
        d = _obstacle_sdf(kinds[m], oq[m], ot[m], par[m], px, py, pz)
        if d < best:
            best = d
            idx = m
    return best, idx


@njit(cache=True)
def scene_point_grad(kinds, oq, ot, par, m, px, py, pz):
    return _obstacle_grad(kinds[m], oq[m], ot[m], par[m], px, py, pz)


@njit(cache=True)
def _aabb_dist(aabb, px, py, pz):
    dx = max(max(aabb[0, 0] - px, px - aabb[1, 0]), 0.0)
    dy = max(max(aabb[0, 1] - py, py - aabb[1, 1]), 0.0)
    dz = max(max(aabb[0, 2] - pz, pz - aabb[1, 2]), 0.0)
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True)
def _segment_min_golden(kind, oq, ot, par, ax, ay, az, bx, by, bz, tol_m):
    """Golden-section of sdf along segment a->b (sdf is convex along a line
    for these convex primitives). Returns (t_min, sdf_min)."""
    seg = math.sqrt((bx - ax) ** 2 + (by - ay) ** 2 + (bz - az) ** 2)
    if kind == KIND_HALFSPACE or seg < 1e-12:
        da = _obstacle_sdf(kind, oq, ot, par, ax, ay, az)
        db = _obstacle_sdf(kind, oq, ot, par, bx, by, bz)
        if da <= db:
            return 0.0, da
        return 1.0, db
    lo = 0.0
    hi = 1.0
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc = _obstacle_sdf(kind, oq, ot, par, ax + (bx - ax) * c, ay + (by - ay) * c, az + (bz - az) * c)
    fd = _obstacle_sdf(kind, oq, ot, par, ax + (bx - ax) * d, ay + (by - ay) * d, az + (bz - az) * d)
    while (hi - lo) * seg > tol_m:
        if fc < fd:
            hi = d
            d = c
            fd = fc
            c = hi - _INVPHI * (hi - lo)
            fc = _obstacle_sdf(kind, oq, ot, par, ax + (bx - ax) * c, ay + (by - ay) * c, az + (bz - az) * c)
        else:
            lo = c
            c = d
            fc = fd
            d = lo + _INVPHI * (hi - lo)
            fd = _obstacle_sdf(kind, oq, ot, par, ax + (bx - ax) * d, ay + (by - ay) * d, az + (bz - az) * d)
    t = 0.5 * (lo + hi)
    f = _obstacle_sdf(kind, oq, ot, par, ax + (bx - ax) * t, ay + (by - ay) * t, az + (bz - az) * t)
    # endpoints can beat the interior bracket when the minimum sits on the boundary
    fa = _obstacle_sdf(kind, oq, ot, par, ax, ay, az)
    fb = _obstacle_sdf(kind, oq, ot, par, bx, by, bz)
    if fa < f:
        t, f = 0.0, fa
    if fb < f:
        t, f = 1.0, fb
    return t, f


@njit(cache=True)
def min_distances_kernel(x, q, half, kinds, oq, ot, par, out_dist, out_seg, out_t):
    """Per-obstacle minimum axis distance over all segments.

    Coarse 3-sample scan per (segment, obstacle), golden refinement of every
    segment within 0.05 m of the coarse best (3-sample error is bounded by
    the sample spacing, so this window cannot miss the true minimizer).
    """
    N = x.shape[0]
    M = kinds.shape[0]
    for m in range(M):
        best = 1e30
        for i in range(N):
            ex, ey, ez = _qrot(q[i, 0], q[i, 1], q[i, 2], q[i, 3], 0.0, 0.0, half)
            axx, ayy, azz = x[i, 0] - ex, x[i, 1] - ey, x[i, 2] - ez
            bxx, byy, bzz = x[i, 0] + ex, x[i, 1] + ey, x[i, 2] + ez
            coarse = 1e30
            for k in range(3):
                t = 0.5 * k
                d = _obstacle_sdf(kinds[m], oq[m], ot[m], par[m],
                                  axx + (bxx - axx) * t, ayy + (byy - ayy) * t, azz + (bzz - azz) * t)
                if d < coarse:
                    coarse = d
            if coarse < best:
                best = coarse
        out_dist[m] = 1e30
        out_seg[m] = -1
        out_t[m] = 0.0
        for i in range(N):
            ex, ey, ez = _qrot(q[i, 0], q[i, 1], q[i, 2], q[i, 3], 0.0, 0.0, half)
            axx, ayy, azz = x[i, 0] - ex, x[i, 1] - ey, x[i, 2] - ez
            bxx, byy, bzz = x[i, 0] + ex, x[i, 1] + ey, x[i, 2] + ez
            coarse = 1e30
            for k in range(3):
                t = 0.5 * k
                d = _obstacle_sdf(kinds[m], oq[m], ot[m], par[m],
                                  axx + (bxx - axx) * t, ayy + (byy - ayy) * t, azz + (bzz - azz) * t)
                if d < coarse:
                    coarse = d
            if coarse <= best + 0.05:
                t, f = _segment_min_golden(kinds[m], oq[m], ot[m], par[m],
                                           axx, ayy, azz, bxx, byy, bzz, 1e-7)
                if f < out_dist[m]:
                    out_dist[m] = f
                    out_seg[m] = i
                    out_t[m] = t
    return 0


# ---------------------------------------------------------------------------
# small dense linear algebra for the block-tridiagonal joint solve
# ---------------------------------------------------------------------------

@njit(cache=True)
def _rotmat_from_quat(q, i, R):
    w, x, y, z = q[i, 0], q[i, 1], q[i, 2], q[i, 3]
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)


@njit(cache=True)
def _winv_fill(q, inv_ia, inv_ib, inv_ic, i, R, out):
    """World inverse inertia R diag(inv_I) R^T."""
    _rotmat_from_quat(q, i, R)
    for r in range(3):
        for c in range(3):
            out[r, c] = (R[r, 0] * inv_ia[i] * R[c, 0]
                         + R[r, 1] * inv_ib[i] * R[c, 1]
                         + R[r, 2] * inv_ic[i] * R[c, 2])


@njit(cache=True)
def _mm3(A, B, out):
    for r in range(3):
        for c in range(3):
            out[r, c] = A[r, 0] * B[0, c] + A[r, 1] * B[1, c] + A[r, 2] * B[2, c]


@njit(cache=True)
def _mm3_tn(A, B, out):
    """out = A^T B."""
    for r in range(3):
        for c in range(3):
            out[r, c] = A[0, r] * B[0, c] + A[1, r] * B[1, c] + A[2, r] * B[2, c]


@njit(cache=True)
def _skew_fill(vx, vy, vz, S):
    S[0, 0] = 0.0
    S[0, 1] = -vz
    S[0, 2] = vy
    S[1, 0] = vz
    S[1, 1] = 0.0
    S[1, 2] = -vx
    S[2, 0] = -vy
    S[2, 1] = vx
    S[2, 2] = 0.0


@njit(cache=True)
def _inv6(A, out, work):
    """Gauss-Jordan inverse with partial pivoting; work is (6,12) scratch."""
    for r in range(6):
        for c in range(6):
            work[r, c] = A[r, c]
            work[r, c + 6] = 1.0 if r == c else 0.0
    for col in range(6):
        piv = col
        big = abs(work[col, col])
        for r in range(col + 1, 6):
            if abs(work[r, col]) > big:
                big = abs(work[r, col])
                piv = r
        if big < 1e-300:
            return 1
        if piv != col:
            for c in range(12):
                tmp = work[col, c]
                work[col, c] = work[piv, c]
                work[piv, c] = tmp
        inv = 1.0 / work[col, col]
        for c in range(12):
            work[col, c] *= inv
        for r in range(6):
            if r == col:
                continue
            f = work[r, col]
            if f != 0.0:
                for c in range(12):
                    work[r, c] -= f * work[col, c]
    for r in range(6):
        for c in range(6):
            out[r, c] = work[r, c + 6]
    return 0


@njit(cache=True)
def _mm6(A, B, out):
    for r in range(6):
        for c in range(6):
            s = 0.0
            for k in range(6):
                s += A[r, k] * B[k, c]
            out[r, c] = s


@njit(cache=True)
def _mm6_t(A, B, out):
    """out = A^T B."""
    for r in range(6):
        for c in range(6):
            s = 0.0
            for k in range(6):
                s += A[k, r] * B[k, c]
            out[r, c] = s


@njit(cache=True)
def _mv6(A, v, out):
    for r in range(6):
        s = 0.0
        for k in range(6):
            s += A[r, k] * v[k]
        out[r] = s


# ---------------------------------------------------------------------------
# PBD substep loop: XPBD multipliers, direct joint solve, contact projection
# ---------------------------------------------------------------------------

@njit(cache=True)
def run_substeps(n_sub, n_steps, h,
                 x, q, v, w,
                 inv_m, inv_ia, inv_ib, inv_ic, mass,
                 half, radius, k_stretch, k_bend0, k_bend1, k_bend2,
                 damp_lin, damp_ang, grav,
                 att_seg, att_x0, att_q0, att_x1, att_q1,
                 kinds, oq, ot, par, aabb,
                 contact_margin,
                 lam_s, lam_b, wrench_out,
                 contact_buf, x_prev, q_prev):
    """Advance the rod n_sub substeps of size h. Returns 0, or the 1-based
    substep index at which a non-finite value first appeared.

    Attachment targets interpolate from (att_x0, att_q0) to (att_x1, att_q1)
    across the substeps; held segments have zero inverse mass so every
    constraint treats them as boundary conditions. wrench_out receives the
    substep-averaged reaction wrench (force the holder applies to the rod,
    world frame) per attachment.
    """
    N = x.shape[0]
    A = att_seg.shape[0]
    M = kinds.shape[0]
    cap = contact_buf.shape[0]
    exp_lin = math.exp(-damp_lin * h)
    exp_ang = math.exp(-damp_ang * h)
    # stretch uses the axial stiffness EA/l: near-rigid, but it regularizes
    # the taut-span indeterminacy between two kinematic grasps
    a_s = 1.0 / (k_stretch * h * h)
    a_t0 = 1.0 / (k_bend0 * h * h)
    a_t1 = 1.0 / (k_bend1 * h * h)
    a_t2 = 1.0 / (k_bend2 * h * h)
    inv_h2 = 1.0 / (h * h)
    reach = half + radius + contact_margin + 0.02
    J = N - 1

    # scratch for the joint system (allocated per call, reused per substep)
    WINV = np.zeros((N, 3, 3))
    HD = np.zeros((J, 6, 6))
    HU = np.zeros((J, 6, 6))
    DINV = np.zeros((J, 6, 6))
    RHS = np.zeros((J, 6))
    LAM = np.zeros((J, 6))
    R1S = np.zeros((J, 3, 3))
    LEV = np.zeros((J, 6))
    CC = np.zeros(6)
    S1 = np.zeros((3, 3))
    S2 = np.zeros((3, 3))
    A1 = np.zeros((3, 3))
    A2 = np.zeros((3, 3))
    T3A = np.zeros((3, 3))
    T3B = np.zeros((3, 3))
    R3A = np.zeros((3, 3))
    R3B = np.zeros((3, 3))
    L6 = np.zeros((6, 6))
    T6 = np.zeros((6, 6))
    W6 = np.zeros((6, 12))
    V6 = np.zeros(6)
    V6B = np.zeros(6)

    for a in range(A):
        for c in range(6):
            wrench_out[a, c] = 0.0

    for s in range(n_sub):
        frac = (s + 1.0) / n_sub
        # --- integrate ---------------------------------------------------
        for i in range(N):
            for c in range(3):
                x_prev[i, c] = x[i, c]
            for c in range(4):
                q_prev[i, c] = q[i, c]
            if inv_m[i] > 0.0:
                v[i, 2] += h * grav
                x[i, 0] += h * v[i, 0]
                x[i, 1] += h * v[i, 1]
                x[i, 2] += h * v[i, 2]
                # gyroscopic update, one implicit Newton step in the body
                # frame (explicit w x Iw blows up for thin anisotropic
                # segments once they spin)
                qw, qx, qy, qz = q[i, 0], q[i, 1], q[i, 2], q[i, 3]
                bx, by, bz = _qrot_inv(qw, qx, qy, qz, w[i, 0], w[i, 1], w[i, 2])
                Ia = 1.0 / inv_ia[i]
                Ib = 1.0 / inv_ib[i]
                Ic = 1.0 / inv_ic[i]
                fx_ = h * (by * bz * (Ic - Ib))
                fy_ = h * (bz * bx * (Ia - Ic))
                fz_ = h * (bx * by * (Ib - Ia))
                # J = I + h (skew(w) I - skew(I w)), rows of the 3x3 system
                j00 = Ia
                j01 = h * (Ic - Ib) * bz
                j02 = h * (Ic - Ib) * by
                j10 = h * (Ia - Ic) * bz
                j11 = Ib
                j12 = h * (Ia - Ic) * bx
                j20 = h * (Ib - Ia) * by
                j21 = h * (Ib - Ia) * bx
                j22 = Ic
                det = (j00 * (j11 * j22 - j12 * j21)
                       - j01 * (j10 * j22 - j12 * j20)
                       + j02 * (j10 * j21 - j11 * j20))
                if abs(det) > 1e-300:
                    inv_det = 1.0 / det
                    dxl = -inv_det * (fx_ * (j11 * j22 - j12 * j21)
                                      - j01 * (fy_ * j22 - j12 * fz_)
                                      + j02 * (fy_ * j21 - j11 * fz_))
                    dyl = -inv_det * (j00 * (fy_ * j22 - j12 * fz_)
                                      - fx_ * (j10 * j22 - j12 * j20)
                                      + j02 * (j10 * fz_ - fy_ * j20))
                    dzl = -inv_det * (j00 * (j11 * fz_ - fy_ * j21)
                                      - j01 * (j10 * fz_ - fy_ * j20)
                                      + fx_ * (j10 * j21 - j11 * j20))
                    bx += dxl
                    by += dyl
                    bz += dzl
                    wx, wy, wz = _qrot(qw, qx, qy, qz, bx, by, bz)
                    w[i, 0] = wx
                    w[i, 1] = wy
                    w[i, 2] = wz
                _apply_ang(q, i, h * w[i, 0], h * w[i, 1], h * w[i, 2])

        for a in range(A):
            i = att_seg[a]
            for c in range(3):
                x[i, c] = att_x0[a, c] + frac * (att_x1[a, c] - att_x0[a, c])
            # slerp toward the target orientation
            d = (att_q0[a, 0] * att_q1[a, 0] + att_q0[a, 1] * att_q1[a, 1]
                 + att_q0[a, 2] * att_q1[a, 2] + att_q0[a, 3] * att_q1[a, 3])
            sg = 1.0 if d >= 0.0 else -1.0
            dd = min(abs(d), 1.0)
            ang = math.acos(dd)
            if ang < 1e-9:
                w0, w1 = 1.0 - frac, frac
            else:
                w0 = math.sin((1.0 - frac) * ang) / math.sin(ang)
                w1 = math.sin(frac * ang) / math.sin(ang)
            nrm = 0.0
            for c in range(4):
                q[i, c] = w0 * att_q0[a, c] + w1 * sg * att_q1[a, c]
                nrm += q[i, c] * q[i, c]
            nrm = 1.0 / math.sqrt(nrm)
            for c in range(4):
                q[i, c] *= nrm

        # --- reset multipliers, detect contacts --------------------------
        for j in range(N - 1):
            for c in range(3):
                lam_s[j, c] = 0.0
                lam_b[j, c] = 0.0
        n_con = 0
        if M > 0:
            for i in range(N):
                if inv_m[i] == 0.0:
                    continue
                for m in range(M):
                    if kinds[m] != KIND_HALFSPACE:
                        if _aabb_dist(aabb[m], x[i, 0], x[i, 1], x[i, 2]) > reach:
                            continue
                    ex, ey, ez = _qrot(q[i, 0], q[i, 1], q[i, 2], q[i, 3], 0.0, 0.0, half)
                    for k in range(5):
                        t = 0.25 * k
                        u = 2.0 * t - 1.0
                        px = x[i, 0] + u * ex
                        py = x[i, 1] + u * ey
                        pz = x[i, 2] + u * ez
                        sd = _obstacle_sdf(kinds[m], oq[m], ot[m], par[m], px, py, pz)
                        if sd - radius <= contact_margin and n_con < cap:
                            gx, gy, gz = _obstacle_grad(kinds[m], oq[m], ot[m], par[m], px, py, pz)
                            contact_buf[n_con, 0] = i
                            contact_buf[n_con, 1] = m
                            contact_buf[n_con, 2] = u
                            contact_buf[n_con, 3] = gx
                            contact_buf[n_con, 4] = gy
                            contact_buf[n_con, 5] = gz
                            n_con += 1

        for _step in range(n_steps):
            # --- contact position constraints (clearance >= 0) -----------
            for ci in range(n_con):
                i = int(contact_buf[ci, 0])
                m = int(contact_buf[ci, 1])
                u = contact_buf[ci, 2]
                qw, qx, qy, qz = q[i, 0], q[i, 1], q[i, 2], q[i, 3]
                ex, ey, ez = _qrot(qw, qx, qy, qz, 0.0, 0.0, half)
                rx, ry, rz = u * ex, u * ey, u * ez
                px, py, pz = x[i, 0] + rx, x[i, 1] + ry, x[i, 2] + rz
                sd = _obstacle_sdf(kinds[m], oq[m], ot[m], par[m], px, py, pz)
                pen = radius - sd
                if pen <= 0.0:
                    continue
                nx, ny, nz = _obstacle_grad(kinds[m], oq[m], ot[m], par[m], px, py, pz)
                contact_buf[ci, 3] = nx
                contact_buf[ci, 4] = ny
                contact_buf[ci, 5] = nz
                cx, cy, cz = _cross(rx, ry, rz, nx, ny, nz)
                ix, iy, iz = _inv_inertia_apply(qw, qx, qy, qz, inv_ia[i], inv_ib[i], inv_ic[i],
                                                cx, cy, cz)
                wgen = inv_m[i] + cx * ix + cy * iy + cz * iz
                if wgen <= 0.0:
                    continue
                dlam = pen / wgen
                x[i, 0] += inv_m[i] * dlam * nx
                x[i, 1] += inv_m[i] * dlam * ny
                x[i, 2] += inv_m[i] * dlam * nz
                _apply_ang(q, i, ix * dlam, iy * dlam, iz * dlam)

            # --- stretch + bend/twist: direct block-tridiagonal solve -----
            # One Newton step on all joint constraints per solver step.
            # Gauss-Seidel sweeps stall on the low-frequency bending modes
            # of stiff rods; the 6x6 block Thomas solve carries tip loads to
            # the root within a single substep.
            for i in range(N):
                _winv_fill(q, inv_ia, inv_ib, inv_ic, i, R3A, WINV[i])
            for j in range(J):
                i1 = j
                i2 = j + 1
                _rotmat_from_quat(q, i1, R1S[j])
                _rotmat_from_quat(q, i2, R3B)
                r1x = half * R1S[j][0, 2]
                r1y = half * R1S[j][1, 2]
                r1z = half * R1S[j][2, 2]
                r2x = -half * R3B[0, 2]
                r2y = -half * R3B[1, 2]
                r2z = -half * R3B[2, 2]
                LEV[j, 0] = r1x
                LEV[j, 1] = r1y
                LEV[j, 2] = r1z
                LEV[j, 3] = r2x
                LEV[j, 4] = r2y
                LEV[j, 5] = r2z
                # constraint values: endpoint gap, local rotation from rest
                CC[0] = (x[i2, 0] + r2x) - (x[i1, 0] + r1x)
                CC[1] = (x[i2, 1] + r2y) - (x[i1, 1] + r1y)
                CC[2] = (x[i2, 2] + r2z) - (x[i1, 2] + r1z)
                rw, rx_, ry_, rz_ = _qmul(q[i1, 0], -q[i1, 1], -q[i1, 2], -q[i1, 3],
                                          q[i2, 0], q[i2, 1], q[i2, 2], q[i2, 3])
                if rw < 0.0:
                    rw, rx_, ry_, rz_ = -rw, -rx_, -ry_, -rz_
                vn = math.sqrt(rx_ * rx_ + ry_ * ry_ + rz_ * rz_)
                if vn < 1e-12:
                    scale = 2.0
                else:
                    scale = 2.0 * math.atan2(vn, rw) / vn
                CC[3] = scale * rx_
                CC[4] = scale * ry_
                CC[5] = scale * rz_
                if inv_m[i1] == 0.0 and inv_m[i2] == 0.0:
                    # joint between two held segments: decoupled, no impulse
                    for r in range(6):
                        RHS[j, r] = 0.0
                        for c in range(6):
                            HD[j][r, c] = 1.0 if r == c else 0.0
                            HU[j][r, c] = 0.0
                        if j > 0:
                            for c in range(6):
                                HU[j - 1][r, c] = 0.0
                    continue
                W1 = WINV[i1]
                W2 = WINV[i2]
                _skew_fill(r1x, r1y, r1z, S1)
                _skew_fill(r2x, r2y, r2z, S2)
                _mm3(S1, W1, A1)     # A1 = S1 W1
                _mm3(S2, W2, A2)     # A2 = S2 W2
                _mm3(A1, S1, T3A)    # S1 W1 S1
                _mm3(A2, S2, T3B)
                musum = inv_m[i1] + inv_m[i2]
                for r in range(3):
                    for c in range(3):
                        # S W S^T = -(S W S)
                        HD[j][r, c] = -(T3A[r, c] + T3B[r, c]) + (musum if r == c else 0.0)
                for r in range(3):
                    for c in range(3):
                        T3A[r, c] = A1[r, c] + A2[r, c]
                _mm3(T3A, R1S[j], T3B)   # (S1W1+S2W2) R1
                for r in range(3):
                    for c in range(3):
                        HD[j][r, c + 3] = -T3B[r, c]
                        HD[j][c + 3, r] = -T3B[r, c]
                for r in range(3):
                    for c in range(3):
                        T3A[r, c] = W1[r, c] + W2[r, c]
                _mm3(T3A, R1S[j], T3B)
                _mm3_tn(R1S[j], T3B, T3A)  # R1^T (W1+W2) R1
                for r in range(3):
                    for c in range(3):
                        HD[j][r + 3, c + 3] = T3A[r, c]
                HD[j][0, 0] += a_s
                HD[j][1, 1] += a_s
                HD[j][2, 2] += a_s
                HD[j][3, 3] += a_t0
                HD[j][4, 4] += a_t1
                HD[j][5, 5] += a_t2
                RHS[j, 0] = -CC[0] - a_s * lam_s[j, 0]
                RHS[j, 1] = -CC[1] - a_s * lam_s[j, 1]
                RHS[j, 2] = -CC[2] - a_s * lam_s[j, 2]
                RHS[j, 3] = -CC[3] - a_t0 * lam_b[j, 0]
                RHS[j, 4] = -CC[4] - a_t1 * lam_b[j, 1]
                RHS[j, 5] = -CC[5] - a_t2 * lam_b[j, 2]
                # coupling block H_{j-1,j} through shared body i1 = j
                if j > 0:
                    W = WINV[i1]
                    mu = inv_m[i1]
                    # S = skew(r1 of joint j); S2prev = -S
                    _mm3(S1, W, A1)          # S W
                    _mm3(A1, S1, T3A)        # S W S
                    for r in range(3):
                        for c in range(3):
                            HU[j - 1][r, c] = -T3A[r, c] - (mu if r == c else 0.0)
                    _mm3(A1, R1S[j], T3B)    # S W R1n
                    for r in range(3):
                        for c in range(3):
                            HU[j - 1][r, c + 3] = -T3B[r, c]
                    _mm3_tn(R1S[j - 1], A1, T3A)   # R1p^T (S W)^T? need R1p^T W S
                    _mm3(W, S1, T3B)
                    _mm3_tn(R1S[j - 1], T3B, T3A)  # R1p^T W S
                    for r in range(3):
                        for c in range(3):
                            HU[j - 1][r + 3, c] = -T3A[r, c]
                    _mm3(W, R1S[j], T3B)
                    _mm3_tn(R1S[j - 1], T3B, T3A)  # R1p^T W R1n
                    for r in range(3):
                        for c in range(3):
                            HU[j - 1][r + 3, c + 3] = -T3A[r, c]

            # block Thomas factorization and solve
            ok = _inv6(HD[0], DINV[0], W6)
            for j in range(1, J):
                _mm6_t(HU[j - 1], DINV[j - 1], L6)
                _mm6(L6, HU[j - 1], T6)
                for r in range(6):
                    for c in range(6):
                        HD[j][r, c] -= T6[r, c]
                _mv6(L6, RHS[j - 1], V6)
                for r in range(6):
                    RHS[j, r] -= V6[r]
                ok += _inv6(HD[j], DINV[j], W6)
            if ok == 0:
                _mv6(DINV[J - 1], RHS[J - 1], V6)
                for r in range(6):
                    LAM[J - 1, r] = V6[r]
                for j in range(J - 2, -1, -1):
                    _mv6(HU[j], LAM[j + 1], V6)
                    for r in range(6):
                        V6[r] = RHS[j, r] - V6[r]
                    _mv6(DINV[j], V6, V6B)
                    for r in range(6):
                        LAM[j, r] = V6B[r]
                # apply impulses
                for j in range(J):
                    i1 = j
                    i2 = j + 1
                    lsx, lsy, lsz = LAM[j, 0], LAM[j, 1], LAM[j, 2]
                    lbx = (R1S[j][0, 0] * LAM[j, 3] + R1S[j][0, 1] * LAM[j, 4]
                           + R1S[j][0, 2] * LAM[j, 5])
                    lby = (R1S[j][1, 0] * LAM[j, 3] + R1S[j][1, 1] * LAM[j, 4]
                           + R1S[j][1, 2] * LAM[j, 5])
                    lbz = (R1S[j][2, 0] * LAM[j, 3] + R1S[j][2, 1] * LAM[j, 4]
                           + R1S[j][2, 2] * LAM[j, 5])
                    for c in range(3):
                        lam_s[j, c] += LAM[j, c]
                        lam_b[j, c] += LAM[j, c + 3]
                    if inv_m[i1] > 0.0:
                        x[i1, 0] -= inv_m[i1] * lsx
                        x[i1, 1] -= inv_m[i1] * lsy
                        x[i1, 2] -= inv_m[i1] * lsz
                        cx, cy, cz = _cross(LEV[j, 0], LEV[j, 1], LEV[j, 2], lsx, lsy, lsz)
                        tx = -cx - lbx
                        ty = -cy - lby
                        tz = -cz - lbz
                        W1 = WINV[i1]
                        _apply_ang(q, i1,
                                   W1[0, 0] * tx + W1[0, 1] * ty + W1[0, 2] * tz,
                                   W1[1, 0] * tx + W1[1, 1] * ty + W1[1, 2] * tz,
                                   W1[2, 0] * tx + W1[2, 1] * ty + W1[2, 2] * tz)
                    if inv_m[i2] > 0.0:
                        x[i2, 0] += inv_m[i2] * lsx
                        x[i2, 1] += inv_m[i2] * lsy
                        x[i2, 2] += inv_m[i2] * lsz
                        cx, cy, cz = _cross(LEV[j, 3], LEV[j, 4], LEV[j, 5], lsx, lsy, lsz)
                        tx = cx + lbx
                        ty = cy + lby
                        tz = cz + lbz
                        W2 = WINV[i2]
                        _apply_ang(q, i2,
                                   W2[0, 0] * tx + W2[0, 1] * ty + W2[0, 2] * tz,
                                   W2[1, 0] * tx + W2[1, 1] * ty + W2[1, 2] * tz,
                                   W2[2, 0] * tx + W2[2, 1] * ty + W2[2, 2] * tz)

        # --- holder wrench ------------------------------------------------
        # The elastic joint force/torque equals stiffness times constraint
        # violation (lambda / h^2 at convergence, but reading k*C instead of
        # lambda avoids the ill-conditioned multiplier split along taut
        # spans). Held-segment gravity completes the reaction.
        for a in range(A):
            i = att_seg[a]
            fx = 0.0
            fy = 0.0
            fz = mass[i] * grav
            tx = 0.0
            ty = 0.0
            tz = 0.0
            qw, qx, qy, qz = q[i, 0], q[i, 1], q[i, 2], q[i, 3]
            ex, ey, ez = _qrot(qw, qx, qy, qz, 0.0, 0.0, half)
            if i < N - 1:
                # joint (i, i+1): this segment is the lower body
                i2 = i + 1
                e2x, e2y, e2z = _qrot(q[i2, 0], q[i2, 1], q[i2, 2], q[i2, 3], 0.0, 0.0, half)
                gxx = (x[i2, 0] - e2x) - (x[i, 0] + ex)
                gyy = (x[i2, 1] - e2y) - (x[i, 1] + ey)
                gzz = (x[i2, 2] - e2z) - (x[i, 2] + ez)
                fjx, fjy, fjz = k_stretch * gxx, k_stretch * gyy, k_stretch * gzz
                fx += fjx
                fy += fjy
                fz += fjz
                cx, cy, cz = _cross(ex, ey, ez, fjx, fjy, fjz)
                tx += cx
                ty += cy
                tz += cz
                rw, rx_, ry_, rz_ = _qmul(qw, -qx, -qy, -qz,
                                          q[i2, 0], q[i2, 1], q[i2, 2], q[i2, 3])
                if rw < 0.0:
                    rw, rx_, ry_, rz_ = -rw, -rx_, -ry_, -rz_
                vn = math.sqrt(rx_ * rx_ + ry_ * ry_ + rz_ * rz_)
                scale = 2.0 if vn < 1e-12 else 2.0 * math.atan2(vn, rw) / vn
                bx, by, bz = _qrot(qw, qx, qy, qz,
                                   k_bend0 * scale * rx_, k_bend1 * scale * ry_,
                                   k_bend2 * scale * rz_)
                tx += bx
                ty += by
                tz += bz
            if i > 0:
                # joint (i-1, i): this segment is the upper body
                i1 = i - 1
                q1w, q1x, q1y, q1z = q[i1, 0], q[i1, 1], q[i1, 2], q[i1, 3]
                e1x, e1y, e1z = _qrot(q1w, q1x, q1y, q1z, 0.0, 0.0, half)
                gxx = (x[i, 0] - ex) - (x[i1, 0] + e1x)
                gyy = (x[i, 1] - ey) - (x[i1, 1] + e1y)
                gzz = (x[i, 2] - ez) - (x[i1, 2] + e1z)
                fjx, fjy, fjz = -k_stretch * gxx, -k_stretch * gyy, -k_stretch * gzz
                fx += fjx
                fy += fjy
                fz += fjz
                cx, cy, cz = _cross(-ex, -ey, -ez, fjx, fjy, fjz)
                tx += cx
                ty += cy
                tz += cz
                rw, rx_, ry_, rz_ = _qmul(q1w, -q1x, -q1y, -q1z, qw, qx, qy, qz)
                if rw < 0.0:
                    rw, rx_, ry_, rz_ = -rw, -rx_, -ry_, -rz_
                vn = math.sqrt(rx_ * rx_ + ry_ * ry_ + rz_ * rz_)
                scale = 2.0 if vn < 1e-12 else 2.0 * math.atan2(vn, rw) / vn
                bx, by, bz = _qrot(q1w, q1x, q1y, q1z,
                                   k_bend0 * scale * rx_, k_bend1 * scale * ry_,
                                   k_bend2 * scale * rz_)
                tx -= bx
                ty -= by
                tz -= bz
                qpw, qpx, qpy, qpz = q[j, 0], q[j, 1], q[j, 2], q[j, 3]
                bx, by, bz = _qrot(qpw, qpx, qpy, qpz, lam_b[j, 0], lam_b[j, 1], lam_b[j, 2])
                tx += bx * inv_h2
                ty += by * inv_h2
                tz += bz * inv_h2
            wrench_out[a, 0] -= fx
            wrench_out[a, 1] -= fy
            wrench_out[a, 2] -= fz
            wrench_out[a, 3] -= tx
            wrench_out[a, 4] -= ty
            wrench_out[a, 5] -= tz

        # --- velocity update, damping ------------------------------------
        bad = False
        for i in range(N):
            v[i, 0] = (x[i, 0] - x_prev[i, 0]) / h
            v[i, 1] = (x[i, 1] - x_prev[i, 1]) / h
            v[i, 2] = (x[i, 2] - x_prev[i, 2]) / h
            dw, dxq, dyq, dzq = _qmul(q[i, 0], q[i, 1], q[i, 2], q[i, 3],
                                      q_prev[i, 0], -q_prev[i, 1], -q_prev[i, 2], -q_prev[i, 3])
            sgn = 1.0 if dw >= 0.0 else -1.0
            w[i, 0] = sgn * 2.0 * dxq / h
            w[i, 1] = sgn * 2.0 * dyq / h
            w[i, 2] = sgn * 2.0 * dzq / h
            if inv_m[i] > 0.0:
                v[i, 0] *= exp_lin
                v[i, 1] *= exp_lin
                v[i, 2] *= exp_lin
                w[i, 0] *= exp_ang
                w[i, 1] *= exp_ang
                w[i, 2] *= exp_ang
            if not (math.isfinite(x[i, 0]) and math.isfinite(x[i, 1]) and math.isfinite(x[i, 2])
                    and math.isfinite(v[i, 0]) and math.isfinite(v[i, 1]) and math.isfinite(v[i, 2])):
                bad = True
        if bad:
            return s + 1

        # --- contact velocity constraints (kill approach speed) ----------
        for ci in range(n_con):
            i = int(contact_buf[ci, 0])
            if inv_m[i] == 0.0:
                continue
            u = contact_buf[ci, 2]
            nx, ny, nz = contact_buf[ci, 3], contact_buf[ci, 4], contact_buf[ci, 5]
            qw, qx, qy, qz = q[i, 0], q[i, 1], q[i, 2], q[i, 3]
            ex, ey, ez = _qrot(qw, qx, qy, qz, 0.0, 0.0, half)
            rx, ry, rz = u * ex, u * ey, u * ez
            cvx, cvy, cvz = _cross(w[i, 0], w[i, 1], w[i, 2], rx, ry, rz)
            vn = ((v[i, 0] + cvx) * nx + (v[i, 1] + cvy) * ny + (v[i, 2] + cvz) * nz)
            if vn >= 0.0:
                continue
            cx, cy, cz = _cross(rx, ry, rz, nx, ny, nz)
            ix, iy, iz = _inv_inertia_apply(qw, qx, qy, qz, inv_ia[i], inv_ib[i], inv_ic[i],
                                            cx, cy, cz)
            wgen = inv_m[i] + cx * ix + cy * iy + cz * iz
            if wgen <= 0.0:
                continue
            jimp = -vn / wgen
            v[i, 0] += inv_m[i] * jimp * nx
            v[i, 1] += inv_m[i] * jimp * ny
            v[i, 2] += inv_m[i] * jimp * nz
            w[i, 0] += ix * jimp
            w[i, 1] += iy * jimp
            w[i, 2] += iz * jimp

    inv_n = 1.0 / n_sub
    for a in range(A):
        for c in range(6):
            wrench_out[a, c] *= inv_n
    return 0


# ---------------------------------------------------------------------------
# rigid-chain kinematics and collision queries for the global planner
# ---------------------------------------------------------------------------

@njit(cache=True)
def _rxyz_fill(tx, ty, tz, R):
    """R = Rx(tx) Ry(ty) Rz(tz)."""
    cx, sx = math.cos(tx), math.sin(tx)
    cy, sy = math.cos(ty), math.sin(ty)
    cz, sz = math.cos(tz), math.sin(tz)
    R[0, 0] = cy * cz
    R[0, 1] = -cy * sz
    R[0, 2] = sy
    R[1, 0] = cx * sz + sx * sy * cz
    R[1, 1] = cx * cz - sx * sy * sz
    R[1, 2] = -sx * cy
    R[2, 0] = sx * sz - cx * sy * cz
    R[2, 1] = sx * cz + cx * sy * sz
    R[2, 2] = cx * cy


@njit(cache=True)
def chain_fk_kernel(theta, K, l, pts, Rs):
    """Forward kinematics: base point + per-link XYZ spherical joints.

    pts is (K+1, 3) endpoints, Rs is (K, 3, 3) link frames.
    """
    pts[0, 0] = theta[0]
    pts[0, 1] = theta[1]
    pts[0, 2] = theta[2]
    Rl = np.zeros((3, 3))
    Rp = np.eye(3)
    Rn = np.zeros((3, 3))
    for i in range(K):
        _rxyz_fill(theta[3 + 3 * i], theta[4 + 3 * i], theta[5 + 3 * i], Rl)
        for r in range(3):
            for c in range(3):
                s = 0.0
                for k in range(3):
                    s += Rp[r, k] * Rl[k, c]
                Rn[r, c] = s
        for r in range(3):
            for c in range(3):
                Rs[i, r, c] = Rn[r, c]
                Rp[r, c] = Rn[r, c]
        pts[i + 1, 0] = pts[i, 0] + l * Rn[0, 2]
        pts[i + 1, 1] = pts[i, 1] + l * Rn[1, 2]
        pts[i + 1, 2] = pts[i, 2] + l * Rn[2, 2]


@njit(cache=True)
def _seg_seg_dist(p1x, p1y, p1z, q1x, q1y, q1z, p2x, p2y, p2z, q2x, q2y, q2z):
    """Closest distance between segments p1-q1 and p2-q2."""
    d1x, d1y, d1z = q1x - p1x, q1y - p1y, q1z - p1z
    d2x, d2y, d2z = q2x - p2x, q2y - p2y, q2z - p2z
    rx, ry, rz = p1x - p2x, p1y - p2y, p1z - p2z
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    if a < 1e-18 and e < 1e-18:
        return math.sqrt(rx * rx + ry * ry + rz * rz)
    if a < 1e-18:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e < 1e-18:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            den = a * e - b * b
            if den > 1e-18:
                s = min(max((b * f - c * e) / den, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    cx = p1x + d1x * s - (p2x + d2x * t)
    cy = p1y + d1y * s - (p2y + d2y * t)
    cz = p1z + d1z * s - (p2z + d2z * t)
    return math.sqrt(cx * cx + cy * cy + cz * cz)


@njit(cache=True)
def chain_min_clearance(pts, radius, kinds, oq, ot, par, aabb):
    """Minimum clearance of the chain capsules against scene and non-adjacent
    self pairs. Negative values are penetrations."""
    K = pts.shape[0] - 1
    M = kinds.shape[0]
    best = 1e30
    for i in range(K):
        mx = 0.5 * (pts[i, 0] + pts[i + 1, 0])
        my = 0.5 * (pts[i, 1] + pts[i + 1, 1])
        mz = 0.5 * (pts[i, 2] + pts[i + 1, 2])
        hl = 0.5 * math.sqrt((pts[i + 1, 0] - pts[i, 0]) ** 2
                             + (pts[i + 1, 1] - pts[i, 1]) ** 2
                             + (pts[i + 1, 2] - pts[i, 2]) ** 2)
        for m in range(M):
            if kinds[m] != KIND_HALFSPACE:
                if _aabb_dist(aabb[m], mx, my, mz) - hl - radius > best:
                    continue
            t, sd = _segment_min_golden(kinds[m], oq[m], ot[m], par[m],
                                        pts[i, 0], pts[i, 1], pts[i, 2],
                                        pts[i + 1, 0], pts[i + 1, 1], pts[i + 1, 2], 1e-6)
            c = sd - radius
            if c < best:
                best = c
    for i in range(K):
        for jj in range(i + 2, K):
            d = _seg_seg_dist(pts[i, 0], pts[i, 1], pts[i, 2],
                              pts[i + 1, 0], pts[i + 1, 1], pts[i + 1, 2],
                              pts[jj, 0], pts[jj, 1], pts[jj, 2],
                              pts[jj + 1, 0], pts[jj + 1, 1], pts[jj + 1, 2])
            c = d - 2.0 * radius
            if c < best:
                best = c
    return best


@njit(cache=True)
def chain_edge_free(t1, t2, K, l, radius, kinds, oq, ot, par, aabb,
                    clearance, step):
    """Validity of the straight joint-space edge t1 -> t2, sampled so that no
    chain point moves more than `step` between checks (conservative bound)."""
    bound = math.sqrt((t2[0] - t1[0]) ** 2 + (t2[1] - t1[1]) ** 2 + (t2[2] - t1[2]) ** 2)
    for k in range(K):
        da = abs(t2[3 + 3 * k] - t1[3 + 3 * k]) + abs(t2[4 + 3 * k] - t1[4 + 3 * k]) \
            + abs(t2[5 + 3 * k] - t1[5 + 3 * k])
        bound += da * (K - k) * l
    n = int(bound / step) + 1
    pts = np.zeros((K + 1, 3))
    Rs = np.zeros((K, 3, 3))
    th = np.zeros(t1.shape[0])
    for s in range(1, n + 1):  # interior samples plus the far endpoint
        f = s / n
        for c in range(t1.shape[0]):
            th[c] = t1[c] + f * (t2[c] - t1[c])
        chain_fk_kernel(th, K, l, pts, Rs)
        if chain_min_clearance(pts, radius, kinds, oq, ot, par, aabb) <= clearance:
            return False
    return True
