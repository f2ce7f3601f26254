"""Reference arm used by the demos, the CLI defaults and the acceptance suite.

Lengths, masses and chamber layout are our own choices for a desk-scale
two-segment arm; the stiffness and damping values are the identified ones
reported for the hardware prototype this package models.
"""
from __future__ import annotations

import numpy as np

from .dynamics import ArmModel, DynamicParameters
from .kinematics import SegmentGeometry

STIFFNESS = (0.124, 0.083)
DAMPING = (0.011, 0.009)
LENGTHS = (0.2, 0.2)
MASSES = (0.05, 0.04)
CHAMBER_AREA = 3e-4
CHAMBER_OFFSET = 0.015

PAYLOADS = (0.0, 0.011, 0.025)
# With r = 0.12 m this height puts both segments near theta = 0.3 rad in a
# C-shaped posture, away from the straight (singular) pose.
CIRCLE_CENTER = (0.0, 0.0, 0.37)

# Both segments bent half a radian; phi = pi bends the tip toward +x.  Identification
# runs start here because the straight pose is singular in phi.
BENT_START = np.array([np.pi, 0.5, np.pi, 0.5])


def default_geometry(n: int = 2):
    if n == 2:
        lengths = LENGTHS
    else:
        lengths = (0.4 / n,) * n
    return tuple(SegmentGeometry(L, CHAMBER_OFFSET, CHAMBER_AREA) for L in lengths)


def default_arm(n: int = 2, payload: float = 0.0) -> ArmModel:
    """The two-segment reference arm, or an ``n``-segment arm of the same total size."""
    if n == 2:
        params = DynamicParameters(MASSES, STIFFNESS, DAMPING, tip_payload_mass=payload)
    else:
        params = DynamicParameters((0.09 / n,) * n, (0.2 / n,) * n, (0.02 / n,) * n,
                                   tip_payload_mass=payload)
    return ArmModel(default_geometry(n), params)


def tracking_gains(n: int = 2, task_dim: int = 3):
    """Adaptive gains that keep the sampled loop stable on the reference arm at 100 Hz.

    The surface keeps the hardware Lambda and alpha.  K_D is reduced from
    0.03 to 1e-3: the smallest inertia eigenvalue of this arm is about 2e-6
    kg m², so 0.03 would put ``dt * K_D / M`` far beyond the discrete
    stability limit of 2.  The tip-mass gain is ten times the others because
    the payload is the coefficient that actually has to move.
    """
    from .control import SlidingParams

    dof = 2 * n
    return SlidingParams.defaults(
        n, task_dim=task_dim,
        K_D=np.full(dof, 1e-3),
        Gamma=np.r_[np.full(3 * n, 1e-3), 1e-2],
        Psi=np.full(dof, 1e-4),
        boundary_layer=np.full(dof, 0.01),
    )


def tracking_pinv():
    """Pseudo-inverse damping scaled to this arm, whose Jacobian singular values sit near 0.03 m/rad."""
    from .kinematics import DampedPinvConfig

    return DampedPinvConfig(epsilon=0.01, lambda_max=0.02)


def invdyn_gains(task_dim: int = 3):
    """Critically damped benchmark gains with the same bandwidth as the sliding surface."""
    from .control import REFERENCE_LAMBDA, InverseDynamicsGains

    return InverseDynamicsGains.critically_damped(REFERENCE_LAMBDA, task_dim, K_null=5.0)


def circle_start(model: ArmModel, trajectory, pinv_cfg=None):
    """Configuration on the circle at t = 0 and the joint rate that matches its tangent velocity."""
    from .kinematics import damped_pinv, inverse_kinematics, tip_jacobian

    pinv_cfg = pinv_cfg or tracking_pinv()
    x0, xd0, _ = trajectory(0.0)
    # bend both segments away from the target so the solution is the C-shaped branch
    heading = np.arctan2(x0[1], x0[0]) + np.pi
    q0 = inverse_kinematics(model.geometry, x0, np.array([heading, 0.3] * model.n))
    return q0, damped_pinv(tip_jacobian(model.geometry, q0), pinv_cfg) @ xd0


# Curvature-space hold used for the Lyapunov checks: the bent start and a
# nearby target with both segments bending toward +x.
REGULATION_TARGET = np.array([np.pi, 0.6, np.pi, 0.55])


def regulation_gains(n: int = 2):
    """Hardware surface and damping gains for a loop that runs at the physics rate (10 kHz).

    At that rate ``dt * K_D / M`` stays small even on the lightest mode, so the
    hardware K_D = 0.03 is usable.  The adaptation gains are larger than the
    tracking ones so that the estimates move visibly within a couple of
    seconds, and the boundary layer is widened to 0.03 so that ``s`` can
    settle at its edge despite a constant disturbance.
    """
    from .control import SlidingParams

    dof = 2 * n
    return SlidingParams.defaults(
        n,
        Gamma=np.full(3 * n + 1, 2e-2),
        Psi=np.full(dof, 0.2),
        boundary_layer=np.full(dof, 0.03),
    )


def spinning_start(model: ArmModel, theta1: float = 0.5, perturbation: float = 0.05):
    """State near a steady rotation of the whole bent arm about the vertical axis.

    Unforced, the straight pose is the only equilibrium, so every planar swing
    passes through the phi singularity.  Spinning the bent arm at the rate
    where the centrifugal load balances the elastic and gravity terms keeps
    both curvatures away from zero.  ``theta1`` fixes the first bend, the
    second bend and the rate are solved for, and ``perturbation`` is then
    added to ``theta1`` so the motion is not a pure rotation.
    """
    from scipy.optimize import fsolve

    from .dynamics import forward_dynamics

    if model.n != 2:
        raise ValueError("spinning_start is defined for the two-segment arm")

    def residual(x):
        th2, w = x
        qdd = forward_dynamics(model, [np.pi, theta1, np.pi, th2], [w, 0.0, w, 0.0], np.zeros(6))
        return qdd[[1, 3]]

    (th2, w), _, ok, msg = fsolve(residual, [0.5, 5.0], full_output=True)
    if ok != 1:
        raise RuntimeError(f"no steady rotation found: {msg}")
    return (np.array([np.pi, theta1 + perturbation, np.pi, th2]), np.array([w, 0.0, w, 0.0]))
