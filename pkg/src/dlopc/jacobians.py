"""Finite-difference tip / collision-distance / stress Jacobians.

Twelve auxiliary simulations (2 agents x 6 twist axes) plus one unperturbed
reference, each cloned from the nominal state and settled incrementally with
the same substep budget so solver drift cancels in the differences. Columns
are ordered (agent 1 vx vy vz wx wy wz, agent 2 ...), all world frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rod import RodSim, SimulationDiverged
from .sdf import min_distances
from .se3 import Pose, quat_from_axis_angle, quat_mul, quat_rotation_error

AXIS_NAMES = ("x", "y", "z", "rx", "ry", "rz")


class JacobianError(RuntimeError):
    pass


@dataclass
class PerturbationConfig:
    linear_step: float = 0.002      # m
    angular_step: float = 0.01      # rad
    settle_substeps: int = 120      # per auxiliary simulation
    measure_substeps: int = 20      # tail window the wrench is averaged over

    def __post_init__(self):
        if self.linear_step <= 0 or self.angular_step <= 0:
            raise ValueError("perturbation steps must be positive")


@dataclass
class JacobianSet:
    tip: np.ndarray                       # 12 x 12
    collision: dict = field(default_factory=dict)   # obstacle name -> (12,)
    stress: np.ndarray = None             # 12 x 12
    tick: int = -1                        # sim tick the estimate belongs to


def _measure(sim: RodSim, obstacle_names):
    tips = sim.tip_poses()
    wrench = sim.wrench_vector()
    dists = {}
    if obstacle_names:
        for r in min_distances(sim.scene, sim.state, sim.params.radius, float("inf")):
            if r.obstacle in obstacle_names:
                dists[r.obstacle] = r.distance
    return tips, wrench, dists


def _perturbed_targets(sim: RodSim, agent_idx: int, axis: int, cfg: PerturbationConfig):
    targets = [Pose(sim.x[a.segment].copy(), sim.q[a.segment].copy())
               for a in sim.attachments]
    t = targets[agent_idx]
    if axis < 3:
        t.position[axis] += cfg.linear_step
    else:
        e = np.zeros(3)
        e[axis - 3] = 1.0
        t.orientation = quat_mul(quat_from_axis_angle(e, cfg.angular_step), t.orientation)
    return targets


def _run_aux(sim: RodSim, targets, cfg: PerturbationConfig):
    aux = sim.clone()
    settle = max(cfg.settle_substeps - cfg.measure_substeps, 1)
    aux.run_substeps_raw(settle, targets)
    aux.run_substeps_raw(cfg.measure_substeps)
    return aux


def estimate_jacobians(sim: RodSim, cfg: PerturbationConfig | None = None,
                       collision_window: float = float("inf")) -> JacobianSet:
    """Forward-difference Jacobians at the current (near-settled) sim state.

    collision_window limits J_coll to obstacles whose nominal distance is
    within it (the controller passes its constraint admission window).
    """
    cfg = cfg or PerturbationConfig()
    if len(sim.attachments) != 2:
        raise JacobianError("jacobian estimation expects two holding agents")
    names = []
    nominal_dists_all = min_distances(sim.scene, sim.state, sim.params.radius, float("inf"))
    for r in nominal_dists_all:
        if r.distance <= collision_window:
            names.append(r.obstacle)

    try:
        ref = _run_aux(sim, None, cfg)
    except SimulationDiverged as e:
        raise JacobianError(f"nominal reference simulation diverged: {e}") from e
    tips0, wrench0, dists0 = _measure(ref, names)

    J_tip = np.zeros((12, 12))
    J_strs = np.zeros((12, 12))
    J_coll = {n: np.zeros(12) for n in names}
    for agent_idx in range(2):
        for axis in range(6):
            col = 6 * agent_idx + axis
            step = cfg.linear_step if axis < 3 else cfg.angular_step
            targets = _perturbed_targets(sim, agent_idx, axis, cfg)
            try:
                aux = _run_aux(sim, targets, cfg)
            except SimulationDiverged as e:
                raise JacobianError(
                    f"auxiliary simulation diverged (agent {agent_idx + 1}, "
                    f"axis {AXIS_NAMES[axis]})") from e
            tips, wrench, dists = _measure(aux, names)
            for t in range(2):
                J_tip[6 * t: 6 * t + 3, col] = (tips[t].position - tips0[t].position) / step
                J_tip[6 * t + 3: 6 * t + 6, col] = quat_rotation_error(
                    tips0[t].orientation, tips[t].orientation) / step
            J_strs[:, col] = (wrench - wrench0) / step
            for n in names:
                if n in dists and n in dists0:
                    J_coll[n][col] = (dists[n] - dists0[n]) / step

    # a tip responds only to the first holder encountered walking inward from
    # it; the cross blocks vanish identically because held segments decouple
    # the chain
    segs = [a.segment for a in sim.attachments]
    near_tip1 = int(np.argmin(segs))
    near_tip2 = int(np.argmax(segs))
    if near_tip1 != near_tip2:
        far_tip1 = 1 - near_tip1
        far_tip2 = 1 - near_tip2
        J_tip[0:6, 6 * far_tip1: 6 * far_tip1 + 6] = 0.0
        J_tip[6:12, 6 * far_tip2: 6 * far_tip2 + 6] = 0.0

    return JacobianSet(tip=J_tip, collision=J_coll, stress=J_strs, tick=sim.ticks)
