"""Collision-free planning and control toolkit for deformable linear objects.

Subsystems:
    se3         rotation/pose algebra (quaternion averaging, IK subproblems)
    sdf         analytic signed-distance collision scenes
    rod         position-based-dynamics rod simulator + stiffness identification
    jacobians   finite-difference tip / distance / stress Jacobians
    planner     rigid-chain global planner (RRT-Connect + shortcut smoothing)
    qp          dense active-set quadratic program solver
    controller  CBF-constrained QP local controller
    bench       task library, trial runner, metrics
    service     FastAPI wrapper; cli is a thin client of it
"""

__version__ = "0.1.0"
