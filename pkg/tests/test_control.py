import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softarm import presets
from softarm.control import (AdaptiveController, AdaptiveState, InverseDynamicsController,
                             InverseDynamicsGains, SlidingParams, adaptive_control_step,
                             allocate_pressures, boundary_layer_residual, curvature_reference,
                             lyapunov, sat, sig_alpha)
from softarm.dynamics import actuator_map, forward_dynamics
from softarm.errors import InvalidInputError
from softarm.simulator import ConstantTarget, PlantTruth, SimConfig, integrate


def test_sig_alpha_examples():
    np.testing.assert_allclose(sig_alpha([-4.0, 0.0, 9.0], 0.5), [-2.0, 0.0, 3.0])


@given(st.floats(-1e3, 1e3), st.floats(0.51, 0.99))
def test_sig_alpha_is_odd_and_monotone(x, alpha):
    assert sig_alpha(-x, alpha) == -sig_alpha(x, alpha)
    assert sig_alpha(x + 1.0, alpha) >= sig_alpha(x, alpha)


def test_sig_alpha_tends_to_identity():
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(sig_alpha(x, 1.0 - 1e-9), x, atol=1e-8)


def test_sat():
    np.testing.assert_array_equal(sat([-3.0, -0.5, 0.0, 0.2, 7.0]), [-1.0, -0.5, 0.0, 0.2, 1.0])


@given(st.floats(-10, 10), st.floats(1e-3, 1.0))
def test_boundary_residual_matches_saturation_formula(s, phi):
    r = boundary_layer_residual(s, phi)
    if abs(s) < phi:
        assert r == 0.0
    else:
        assert r == pytest.approx(s - phi * sat(s / phi), abs=1e-12)


def test_sliding_params_validation():
    with pytest.raises(InvalidInputError, match="alpha"):
        SlidingParams.defaults(2, alpha=1.0)
    with pytest.raises(InvalidInputError, match="K_D"):
        SlidingParams.defaults(2, K_D=np.zeros(4))
    SlidingParams.defaults(2, Psi=np.zeros(4))  # bound adaptation switched off


def _step_inputs(s_scale):
    q = presets.BENT_START.copy()
    qd = np.full(4, 0.01)
    params = presets.regulation_gains()
    target = (presets.REGULATION_TARGET, np.zeros(4), np.zeros(4))
    refs = curvature_reference(q, qd, target, params)
    s = np.full(4, s_scale)
    refs = refs._replace(s=s, s_delta=boundary_layer_residual(s, params.boundary_layer))
    return q, qd, refs, params


def test_estimates_freeze_inside_the_layer():
    model = presets.default_arm()
    q, qd, refs, params = _step_inputs(0.5 * 0.03)
    state = AdaptiveState.initial(0.5 * model.coefficients, 4)
    a0, b0 = state.a_hat.copy(), state.b_hat.copy()
    adaptive_control_step(state, model, q, qd, refs, params, 1e-4)
    np.testing.assert_array_equal(state.a_hat, a0)
    np.testing.assert_array_equal(state.b_hat, b0)


def test_bound_estimate_grows_outside_the_layer():
    model = presets.default_arm()
    q, qd, refs, params = _step_inputs(0.1)
    state = AdaptiveState.initial(model.coefficients, 4)
    previous = state.b_hat.copy()
    for _ in range(5):
        adaptive_control_step(state, model, q, qd, refs, params, 1e-4)
        assert np.all(state.b_hat > previous)
        previous = state.b_hat.copy()


def test_lyapunov_zero_at_truth_and_ignores_unadapted_axes():
    M = np.diag([1.0, 2.0])
    params = SlidingParams.defaults(1, Psi=np.array([0.5, 0.0]))
    a = np.arange(4.0)
    assert lyapunov(M, np.zeros(2), a, a, np.ones(2), np.ones(2), params) == 0.0
    v = lyapunov(M, np.array([1.0, 1.0]), a, a, np.array([1.0, 5.0]), np.zeros(2), params)
    assert v == pytest.approx(0.5 * 3.0 + 0.5 * 1.0 / 0.5)


def test_allocation_realises_requested_force():
    model = presets.default_arm()
    q = presets.BENT_START
    u = np.array([1e-3, -2e-3, 5e-4, 1e-3])
    p, saturated = allocate_pressures(model, q, u)
    assert not saturated.any() and p.min() >= 0.0
    for i in range(2):
        assert p[3 * i:3 * i + 3].min() == 0.0
    np.testing.assert_allclose(actuator_map(model, q) @ p, u, rtol=1e-9, atol=1e-15)


def test_allocation_clips_to_p_max():
    model = presets.default_arm()
    p, saturated = allocate_pressures(model, presets.BENT_START, np.array([1.0, 1.0, 1.0, 1.0]))
    assert saturated.any() and p.max() == model.p_max


def test_inverse_dynamics_with_perfect_model_produces_requested_acceleration():
    model = presets.default_arm()
    gains = InverseDynamicsGains.critically_damped(6.3, 4)
    q, qd = presets.BENT_START, np.array([0.0, 0.01, 0.0, -0.01])
    target = (presets.REGULATION_TARGET, np.zeros(4), np.zeros(4))
    ctrl = InverseDynamicsController(model, gains, ConstantTarget(tuple(presets.REGULATION_TARGET)),
                                     space="curvature")
    p = ctrl(0.0, q, qd, 0.01)
    assert not ctrl.last["saturated"].any()
    wanted = gains.K_P * (target[0] - q) - gains.K_D * qd
    np.testing.assert_allclose(forward_dynamics(model, q, qd, p), wanted, rtol=1e-6, atol=1e-9)


def test_adaptive_regulation_converges():
    model = presets.default_arm()
    params = presets.regulation_gains()
    target = ConstantTarget(tuple(presets.REGULATION_TARGET))
    ctrl = AdaptiveController(model, params, target, "curvature", a0=0.5 * model.coefficients)
    log = integrate(PlantTruth(model), ctrl, SimConfig(duration=0.5, controller_rate=10000),
                    presets.BENT_START)
    e = np.linalg.norm(log.group("e"), axis=1)
    assert e[-1] < 0.2 * e[0]


@settings(max_examples=20, deadline=None)
@given(st.floats(0.6, 0.95), st.floats(1.0, 10.0))
def test_reference_matches_surface_definition(alpha, lam):
    params = SlidingParams.defaults(1, alpha=alpha, Lambda=np.full(2, lam))
    q, qd = np.array([0.1, 0.4]), np.array([0.2, -0.3])
    q_d = np.array([0.3, 0.5])
    refs = curvature_reference(q, qd, (q_d, np.zeros(2), np.zeros(2)), params)
    e = q - q_d
    np.testing.assert_allclose(refs.s, qd + lam * sig_alpha(e, alpha), rtol=1e-12)
