"""Adaptive terminal-sliding-mode control and an inverse-dynamics benchmark.

The adaptive law follows the usual Slotine-Li structure with a terminal
sliding surface ``s = e_dot + Lambda * sig_alpha(e)``, a regressor-driven
coefficient update and a second update that grows the switching gain
``b_hat`` until it dominates the disturbance.  Both updates freeze inside a
boundary layer around ``s = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _core
from .dynamics import ArmModel, regressor
from .errors import ControllerFaultError, InvalidInputError
from .kinematics import DampedPinvConfig, damped_pinv, jacobian_time_derivative

# Surface and damping gains used on the hardware prototype.
REFERENCE_LAMBDA = 6.3
REFERENCE_ALPHA = 0.75
REFERENCE_KD = 0.03


def sig_alpha(x, alpha):
    """Signed power ``|x|**alpha * sign(x)``, applied elementwise."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** alpha


def sat(x):
    """Unit saturation: ``x`` inside [-1, 1], ``sign(x)`` outside."""
    return np.clip(x, -1.0, 1.0)


def reaching_time(Lambda: float, alpha: float, e0: float) -> float:
    """Closed-form time for ``e' = -Lambda sig_alpha(e)`` to reach zero from ``e0``."""
    return abs(e0) ** (1.0 - alpha) / (Lambda * (1.0 - alpha))


def first_passage(Lambda: float, alpha: float, e0: float, tol: float = 1e-6) -> float:
    """Measured time for the scalar surface dynamics to bring ``|e|`` below ``tol``.

    Integrates ``e' = -Lambda sig_alpha(e)`` with an adaptive Runge-Kutta
    scheme and a terminal event at ``|e| = tol``.
    """
    if not (Lambda > 0 and 0 < alpha < 1 and tol > 0):
        raise InvalidInputError("need Lambda > 0, 0 < alpha < 1 and tol > 0")
    if abs(e0) < tol:
        return 0.0
    from scipy.integrate import solve_ivp

    def hit(t, y):
        return abs(y[0]) - tol
    hit.terminal = True

    horizon = 2.0 * reaching_time(Lambda, alpha, e0)
    sol = solve_ivp(lambda t, y: -Lambda * sig_alpha(y, alpha), (0.0, horizon), [e0],
                    events=hit, rtol=1e-10, atol=1e-14)
    if not sol.t_events[0].size:
        raise ControllerFaultError("error did not reach the tolerance", "first_passage")
    return float(sol.t_events[0][0])


@dataclass
class SlidingParams:
    """Gains of the adaptive controller.

    ``boundary_layer`` is the per-axis thickness of the band around ``s = 0``
    in which switching turns linear and adaptation stops.  ``Lambda`` has the
    dimension of the tracked error (``2n`` in curvature space, 3 in task
    space); every other per-axis gain has dimension ``2n``.
    """

    Lambda: np.ndarray
    alpha: float
    K_D: np.ndarray
    Gamma: np.ndarray
    Psi: np.ndarray
    boundary_layer: np.ndarray
    e_clamp: float = 1e-6
    projection: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0.5, 1)")
        if not self.e_clamp > 0:
            raise InvalidInputError("e_clamp must be > 0")
        for name in ("Lambda", "K_D", "Gamma", "Psi", "boundary_layer"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            # Psi = 0 switches the bound adaptation off, which the ablation uses
            ok = np.all(v >= 0) if name == "Psi" else np.all(v > 0)
            if not ok:
                bound = ">= 0" if name == "Psi" else "> 0"
                raise InvalidInputError(f"{name} entries must be {bound}")
            setattr(self, name, v)

    @classmethod
    def defaults(cls, n: int, task_dim: Optional[int] = None, **overrides) -> "SlidingParams":
        """Surface and damping gains from the hardware experiments, plus our adaptation gains."""
        dof = 2 * n
        kw = dict(
            Lambda=np.full(task_dim or dof, REFERENCE_LAMBDA),
            alpha=REFERENCE_ALPHA,
            K_D=np.full(dof, REFERENCE_KD),
            Gamma=np.r_[np.full(n, 5e-3), np.full(n, 5e-3), np.full(n, 1e-4), 5e-3],
            Psi=np.full(dof, 0.05),
            boundary_layer=np.full(dof, 0.01),
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass
class AdaptiveState:
    a_hat: np.ndarray
    b_hat: np.ndarray
    saturated: np.ndarray = field(default=None)

    def __post_init__(self):
        self.a_hat = np.array(self.a_hat, dtype=float)
        self.b_hat = np.array(self.b_hat, dtype=float)
        if np.any(self.b_hat < 0):
            raise InvalidInputError("b_hat must be elementwise >= 0")

    @classmethod
    def initial(cls, a0, dof: int) -> "AdaptiveState":
        return cls(np.asarray(getattr(a0, "values", a0), dtype=float), np.zeros(dof))


class ReferenceSignals(NamedTuple):
    qd_r: np.ndarray
    qdd_r: np.ndarray
    s: np.ndarray
    s_delta: np.ndarray
    error: np.ndarray  # q - q_d or x - x_d
    s_bar: Optional[np.ndarray] = None


def boundary_layer_residual(s, thickness):
    """``s - thickness * sat(s / thickness)``, exactly zero inside the layer.

    The literal formula leaves round-off of order 1e-18 when ``|s| < thickness``,
    which would let the estimates creep while they are meant to be frozen.
    """
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < thickness, 0.0, s - thickness * np.sign(s))


def _reference_terms(err_d, vel_d, acc_d, vel, params):
    """Velocity and acceleration references for the error ``err_d = desired - actual``."""
    lam = params.Lambda
    v_r = vel_d + lam * sig_alpha(err_d, params.alpha)
    gain = params.alpha * lam * np.maximum(np.abs(err_d), params.e_clamp) ** (params.alpha - 1.0)
    a_r = acc_d + gain * (vel_d - vel)
    return v_r, a_r


def curvature_reference(q, qd, traj, params: SlidingParams) -> ReferenceSignals:
    """Reference velocity/acceleration for a curvature-space target ``traj = (q_d, qd_d, qdd_d)``."""
    q_d, qd_d, qdd_d = (np.asarray(v, dtype=float) for v in traj)
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    qd_r, qdd_r = _reference_terms(q_d - q, qd_d, qdd_d, qd, params)
    s = qd - qd_r
    return ReferenceSignals(qd_r, qdd_r, s, boundary_layer_residual(s, params.boundary_layer), q - q_d)


def task_reference(q, qd, geom, traj, params: SlidingParams,
                   pinv_cfg: DampedPinvConfig = DampedPinvConfig()) -> ReferenceSignals:
    """Joint references that make the tip follow ``traj = (x_d, xd_d, xdd_d)``."""
    x_d, xd_d, xdd_d = (np.asarray(v, dtype=float) for v in traj)
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    L = np.array([g.length for g in getattr(geom, "geometry", geom)])
    pos, Jb = _core.body_jacobians(q, L)
    x, J = pos[-1], Jb[-1]
    J_pinv = damped_pinv(J, pinv_cfg)
    xd = J @ qd
    v_x, a_x = _reference_terms(x_d - x, xd_d, xdd_d, xd, params)
    qd_r = J_pinv @ v_x
    Jdot = jacobian_time_derivative(geom, q, qd)
    qdd_r = J_pinv @ (a_x - Jdot @ qd_r)
    s = qd - qd_r
    s_bar = xd - xd_d + params.Lambda * sig_alpha(x - x_d, params.alpha)
    return ReferenceSignals(qd_r, qdd_r, s, boundary_layer_residual(s, params.boundary_layer),
                            x - x_d, s_bar)


def allocate_pressures(model: ArmModel, q, u, pinv_cfg: DampedPinvConfig = DampedPinvConfig()):
    """Chamber pressures realising generalized force ``u`` as closely as the limits allow.

    Each segment block of the actuator map is inverted separately after
    normalising by ``area * offset``.  Equal pressure on all three chambers
    produces no force, so every block is shifted until its lowest chamber sits
    at zero gauge; the result is then clipped to ``p_max``.

    Returns ``(p, saturated)`` where ``saturated`` flags clipped chambers.
    """
    A = _core.actuator_map(np.asarray(q, dtype=float), model.chamber_area, model.chamber_offset)
    n = model.n
    p = np.empty(3 * n)
    for i in range(n):
        scale = model.chamber_area[i] * model.chamber_offset[i]
        block = A[2 * i:2 * i + 2, 3 * i:3 * i + 3] / scale
        pi = damped_pinv(block, pinv_cfg) @ (u[2 * i:2 * i + 2] / scale)
        p[3 * i:3 * i + 3] = pi - pi.min()
    saturated = p > model.p_max
    return np.minimum(p, model.p_max), saturated


def lyapunov(M, s, a_true, a_hat, b_true, b_hat, params: SlidingParams) -> float:
    """``½ sᵀMs + ½ ãᵀΓ⁻¹ã + ½ b̃ᵀΨ⁻¹b̃``."""
    a_err = np.asarray(a_true) - a_hat
    b_err = np.asarray(b_true) - b_hat
    # axes with Psi = 0 never adapt, so their bound term is a constant and dropped
    adapt = params.Psi > 0
    return float(0.5 * s @ M @ s + 0.5 * np.sum(a_err ** 2 / params.Gamma)
                 + 0.5 * np.sum(b_err[adapt] ** 2 / params.Psi[adapt]))


def adaptive_control_step(state: AdaptiveState, model: ArmModel, q, qd, refs: ReferenceSignals,
                          params: SlidingParams, dt: float,
                          a_pinv_cfg: DampedPinvConfig = DampedPinvConfig()):
    """One controller tick: pressures from the current estimates, then Euler adaptation.

    ``model`` supplies geometry, gravity and chamber layout; its dynamic
    parameters are ignored in favour of ``state.a_hat``.  The state is updated
    in place and also returned.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    Y = regressor(model, q, qd, refs.qd_r, refs.qdd_r)
    if not np.all(np.isfinite(Y)):
        raise ControllerFaultError("non-finite regressor", "regressor")
    u = Y @ state.a_hat - params.K_D * refs.s - state.b_hat * sat(refs.s / params.boundary_layer)
    if not np.all(np.isfinite(u)):
        raise ControllerFaultError("non-finite generalized force", "control_law")
    p, saturated = allocate_pressures(model, q, u, a_pinv_cfg)
    if not np.all(np.isfinite(p)):
        raise ControllerFaultError("non-finite pressures", "allocation")

    s_delta = refs.s_delta
    if np.any(s_delta != 0.0):
        state.a_hat = state.a_hat - dt * params.Gamma * (Y.T @ s_delta)
        state.b_hat = state.b_hat + dt * params.Psi * np.abs(s_delta)
        if params.projection is not None:
            lo, hi = params.projection
            state.a_hat = np.clip(state.a_hat, lo, hi)
        if not (np.all(np.isfinite(state.a_hat)) and np.all(np.isfinite(state.b_hat))):
            raise ControllerFaultError("non-finite parameter estimate", "adaptation")
    state.saturated = saturated
    return p, state


@dataclass
class InverseDynamicsGains:
    K_P: np.ndarray
    K_D: np.ndarray
    K_null: float = 0.0

    @classmethod
    def critically_damped(cls, natural_frequency: float, dim: int, K_null: float = 0.0):
        w = float(natural_frequency)
        return cls(np.full(dim, w * w), np.full(dim, 2.0 * w), K_null)


def inverse_dynamics_control(model: ArmModel, q, qd, traj, gains: InverseDynamicsGains,
                             space: str = "curvature",
                             pinv_cfg: DampedPinvConfig = DampedPinvConfig(),
                             a_pinv_cfg: DampedPinvConfig = DampedPinvConfig()):
    """Computed-torque pressures from the nominal (non-adapted) model.

    Returns ``(p, saturated, error)``.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    target, rate, acc = (np.asarray(v, dtype=float) for v in traj)
    if space == "curvature":
        e = target - q
        v = acc + gains.K_P * e + gains.K_D * (rate - qd)
        err = q - target
    elif space == "task":
        pos, Jb = _core.body_jacobians(q, model.lengths)
        x, J = pos[-1], Jb[-1]
        J_pinv = damped_pinv(J, pinv_cfg)
        e = target - x
        v_x = acc + gains.K_P * e + gains.K_D * (rate - J @ qd)
        v = J_pinv @ (v_x - jacobian_time_derivative(model, q, qd) @ qd)
        if gains.K_null:
            v = v - gains.K_null * (qd - J_pinv @ (J @ qd))
        err = x - target
    else:
        raise InvalidInputError(f"unknown control space {space!r}")
    u = regressor(model, q, qd, qd, v) @ model.coefficients
    if not np.all(np.isfinite(u)):
        raise ControllerFaultError("non-finite generalized force", "control_law")
    p, saturated = allocate_pressures(model, q, u, a_pinv_cfg)
    return p, saturated, err


class AdaptiveController:
    """Stateful wrapper tying a trajectory, the reference generator and the adaptive law.

    ``space`` is ``"curvature"`` (trajectory yields ``q_d`` triples) or
    ``"task"`` (trajectory yields tip position triples).
    """

    def __init__(self, model: ArmModel, params: SlidingParams, trajectory, space="task",
                 a0=None, pinv_cfg=DampedPinvConfig(), a_pinv_cfg=DampedPinvConfig()):
        if space not in ("curvature", "task"):
            raise InvalidInputError(f"unknown control space {space!r}")
        self.model = model
        self.params = params
        self.trajectory = trajectory
        self.space = space
        self.pinv_cfg = pinv_cfg
        self.a_pinv_cfg = a_pinv_cfg
        self.a0 = model.coefficients if a0 is None else np.asarray(a0, dtype=float)
        self.reset()

    def reset(self):
        self.state = AdaptiveState.initial(self.a0, 2 * self.model.n)
        self.last = {}

    def __call__(self, t, q, qd, dt):
        traj = self.trajectory(t)
        if self.space == "task":
            refs = task_reference(q, qd, self.model, traj, self.params, self.pinv_cfg)
        else:
            refs = curvature_reference(q, qd, traj, self.params)
        a_hat, b_hat = self.state.a_hat.copy(), self.state.b_hat.copy()
        p, _ = adaptive_control_step(self.state, self.model, q, qd, refs, self.params, dt,
                                     self.a_pinv_cfg)
        self.last = {"e": refs.error, "s": refs.s, "s_delta": refs.s_delta,
                     "a_hat": a_hat, "b_hat": b_hat,
                     "saturated": self.state.saturated}
        return p


class InverseDynamicsController:
    def __init__(self, model: ArmModel, gains: InverseDynamicsGains, trajectory, space="task",
                 pinv_cfg=DampedPinvConfig(), a_pinv_cfg=DampedPinvConfig()):
        self.model = model
        self.gains = gains
        self.trajectory = trajectory
        self.space = space
        self.pinv_cfg = pinv_cfg
        self.a_pinv_cfg = a_pinv_cfg
        self.last = {}

    def reset(self):
        self.last = {}

    def __call__(self, t, q, qd, dt):
        p, saturated, err = inverse_dynamics_control(self.model, q, qd, self.trajectory(t), self.gains,
                                                     self.space, self.pinv_cfg, self.a_pinv_cfg)
        self.last = {"e": err, "saturated": saturated}
        return p
