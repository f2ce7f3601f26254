"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``.  The long simulations are
shared through module-scoped fixtures so the determinism check can rerun
them and compare bytes.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from softarm import _core, presets
from softarm import config as cfgmod
from softarm.control import AdaptiveController, first_passage, reaching_time
from softarm.dynamics import (coriolis_matrix, dynamic_terms, inertia_matrix, regressor,
                              total_energy)
from softarm.identification import SampleBatch, identify
from softarm.kinematics import (DampedPinvConfig, SegmentConfig, SegmentGeometry, damped_pinv,
                                segment_transform)
from softarm.simulator import (ConstantDisturbance, ConstantTarget, FeedforwardController,
                               PlantTruth, SimConfig, integrate, metrics)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEED = 20240611


@pytest.fixture
def report(capsys):
    def _report(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return _report


# -- 1. kinematics oracle ------------------------------------------------------------

def oracle_transforms(phi, theta, L):
    """Vectorised transcription of the segment rotation and translation formulas."""
    cp, sp, ct, st = np.cos(phi), np.sin(phi), np.cos(theta), np.sin(theta)
    T = np.zeros(phi.shape + (4, 4))
    T[..., 0, 0] = cp ** 2 * (ct - 1) + 1
    T[..., 0, 1] = T[..., 1, 0] = sp * cp * (ct - 1)
    T[..., 0, 2] = -cp * st
    T[..., 1, 1] = cp ** 2 * (1 - ct) + ct
    T[..., 1, 2] = -sp * st
    T[..., 2, 0] = cp * st
    T[..., 2, 1] = sp * st
    T[..., 2, 2] = ct
    rho = L / theta
    T[..., 0, 3] = rho * cp * (ct - 1)
    T[..., 1, 3] = rho * sp * (ct - 1)
    T[..., 2, 3] = rho * st
    T[..., 3, 3] = 1.0
    return T


def test_criterion_1_kinematics_oracle(report):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    lengths = np.array([0.2, 0.15])
    count = 10_000
    phi = rng.uniform(-np.pi, np.pi, (count, 2))
    theta = rng.uniform(1e-3, np.pi, (count, 2)) * rng.choice([-1, 1], (count, 2))
    T1 = oracle_transforms(phi[:, 0], theta[:, 0], lengths[0])
    T12 = oracle_transforms(phi[:, 1], theta[:, 1], lengths[1])
    T2 = T1 @ T12
    # centres of mass at the chord midpoints, the second one carried by the first frame
    com1 = 0.5 * T1[:, :3, 3]
    com2 = T1[:, :3, 3] + np.einsum("kij,kj->ki", T1[:, :3, :3], 0.5 * T12[:, :3, 3])
    err_T = err_c = 0.0
    for k in range(count):
        q = np.array([phi[k, 0], theta[k, 0], phi[k, 1], theta[k, 1]])
        R, o = _core.chain(q, lengths)
        err_T = max(err_T, np.abs(R[1] - T1[k, :3, :3]).max(), np.abs(o[1] - T1[k, :3, 3]).max(),
                    np.abs(R[2] - T2[k, :3, :3]).max(), np.abs(o[2] - T2[k, :3, 3]).max())
        c = _core.body_positions(q, lengths)
        err_c = max(err_c, np.abs(c[0] - com1[k]).max(), np.abs(c[1] - com2[k]).max())

    # the closed form switches to a series below |theta| = THETA_SWITCH
    seam = 0.0
    for s in (_core.THETA_SWITCH, -_core.THETA_SWITCH):
        for ph in np.linspace(-np.pi, np.pi, 9):
            lo = segment_transform(SegmentConfig(ph, s * (1 - 1e-12)), 0.2).matrix()
            hi = segment_transform(SegmentConfig(ph, s * (1 + 1e-12)), 0.2).matrix()
            seam = max(seam, np.abs(lo - hi).max())
    elapsed = time.perf_counter() - start
    ok = err_T <= 1e-10 and err_c <= 1e-10 and seam <= 1e-9 and elapsed < 5.0
    report(1, ok, f"max transform err {err_T:.2e}, CoM err {err_c:.2e}, seam jump {seam:.2e}, "
                  f"{elapsed:.2f} s")
    assert ok


# -- 2. skew symmetry ----------------------------------------------------------------

def test_criterion_2_skew_symmetry(arm, report):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    h = 1e-6
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, 4)
        q[1::2] = rng.uniform(0.05, 2.0, 2) * rng.choice([-1, 1], 2)
        qd, x = rng.normal(size=(2, 4))
        # Mdot from the inertia matrix alone, independent of the Christoffel assembly
        Mdot = (inertia_matrix(arm, q + h * qd) - inertia_matrix(arm, q - h * qd)) / (2 * h)
        N = Mdot - 2.0 * coriolis_matrix(arm, q, qd)
        worst = max(worst, abs(x @ N @ x) / (x @ x))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-7 and elapsed < 30.0
    report(2, ok, f"max |x'(Mdot-2C)x|/|x|^2 = {worst:.2e}, {elapsed:.2f} s")
    assert ok


# -- 3. energy -----------------------------------------------------------------------

def test_criterion_3_energy_conservation(report):
    start = time.perf_counter()
    model = presets.default_arm().with_params(damping=(0.0, 0.0))
    q0, qd0 = presets.spinning_start(model)
    unforced = lambda t, q, qd, dt: np.zeros(6)  # noqa: E731
    log = integrate(PlantTruth(model), unforced, SimConfig(dt_physics=1e-4, duration=10.0), q0, qd0)
    q, qd = log.final_state
    e0 = total_energy(model, q0, qd0)
    drift = abs(total_energy(model, q, qd) - e0) / abs(e0)
    elapsed = time.perf_counter() - start
    ok = drift <= 1e-3 and elapsed < 60.0
    report(3, ok, f"relative energy drift {drift:.2e} over 10 s, {elapsed:.2f} s")
    assert ok


# -- 4. regressor --------------------------------------------------------------------

def test_criterion_4_regressor_identity(report):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    model = presets.default_arm(payload=0.025)
    a = model.coefficients
    worst = 0.0
    for _ in range(1000):
        q = rng.uniform(-np.pi, np.pi, 4)
        q[1::2] = rng.uniform(0.05, 2.0, 2) * rng.choice([-1, 1], 2)
        qd, qd_r, qdd_r = rng.normal(size=(3, 4))
        t = dynamic_terms(model, q, qd)
        lhs = t.M @ qdd_r + t.C @ qd_r + t.D @ qd + t.g_vec + t.k_vec
        Y = regressor(model, q, qd, qd_r, qdd_r)
        worst = max(worst, np.linalg.norm(Y @ a - lhs) / (1 + np.linalg.norm(lhs)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    report(4, ok, f"max relative residual {worst:.2e}, {elapsed:.2f} s")
    assert ok


# -- 5. identification ---------------------------------------------------------------

def _excitation(noise):
    model = presets.default_arm()
    sim = SimConfig(duration=60.0, seed=SEED, noise_std=noise)
    return integrate(PlantTruth(model), FeedforwardController(2), sim, presets.BENT_START)


def test_criterion_5_identification(report):
    start = time.perf_counter()
    model = presets.default_arm()
    truth = dict(zip(("k_s_1", "k_s_2", "k_d_1", "k_d_2"), presets.STIFFNESS + presets.DAMPING))
    errors = {}
    for noise in (0.0, 1e-3):
        est = identify(SampleBatch.from_log(_excitation(noise)), model).coefficients
        errors[noise] = max(abs(est[k] - v) / v for k, v in truth.items())
    elapsed = time.perf_counter() - start
    ok = errors[0.0] <= 0.02 and errors[1e-3] <= 0.10 and elapsed < 120.0
    report(5, ok, f"worst relative error {errors[0.0]:.2e} noise-free, {errors[1e-3]:.2e} "
                  f"with 1e-3 rad noise, {elapsed:.1f} s")
    assert ok


# -- 6. finite-time reaching ---------------------------------------------------------

GRID = [(lam, alpha, e0) for lam in (1.0, 6.3) for alpha in (0.6, 0.75, 0.9) for e0 in (0.1, 1.0)]


def _reaching_ratios():
    return {g: first_passage(*g, tol=1e-6) / reaching_time(*g) for g in GRID}


def test_criterion_6_hardware_gains_and_one_sided_bound():
    ratios = _reaching_ratios()
    for (lam, alpha, e0), r in ratios.items():
        assert r <= 1.01, (lam, alpha, e0)  # never later than the closed form
        if alpha < 0.9:
            assert abs(r - 1.0) <= 0.10, (lam, alpha, e0)


@pytest.mark.xfail(strict=True, reason=(
    "first passage to |e| < 1e-6 happens at t_f * (1 - (1e-6/|e0|)**(1-alpha)); for alpha = 0.9 "
    "that is 25-32 % before t_f, so the two-sided 10 % band cannot hold at that grid point"))
def test_criterion_6_finite_time_reaching(report):
    start = time.perf_counter()
    ratios = _reaching_ratios()
    inside = {g: abs(r - 1.0) <= 0.10 for g, r in ratios.items()}
    elapsed = time.perf_counter() - start
    misses = [f"(L={g[0]}, a={g[1]}, e0={g[2]}): {ratios[g]:.3f}" for g in GRID if not inside[g]]
    ok = all(inside.values()) and elapsed < 10.0
    report(6, ok, f"{sum(inside.values())}/{len(GRID)} grid points within 10 %, "
                  f"Lambda=6.3/alpha=0.75 ratio {ratios[(6.3, 0.75, 1.0)]:.3f}; outside: {'; '.join(misses)}")
    assert ok


# -- 7. Lyapunov ---------------------------------------------------------------------

DISTURBANCE = (2e-3, -3e-3, 1e-3, 2e-3)


def _regulation_run(scale):
    model = presets.default_arm()
    params = presets.regulation_gains()
    ctrl = AdaptiveController(model, params, ConstantTarget(tuple(presets.REGULATION_TARGET)),
                              "curvature", a0=scale * model.coefficients)
    sim = SimConfig(duration=2.0, controller_rate=10_000.0, seed=SEED)
    plant = PlantTruth(model, ConstantDisturbance(DISTURBANCE))
    return integrate(plant, ctrl, sim, presets.BENT_START), params


@pytest.fixture(scope="module")
def regulation_logs():
    return {scale: _regulation_run(scale) for scale in (0.5, 1.5)}


def test_criterion_7_lyapunov_monotone(regulation_logs, report):
    start = time.perf_counter()
    worst_dv, frozen, outside_steps, inside_checks = -np.inf, True, 0, 0
    for scale, (log, params) in regulation_logs.items():
        s = log.group("s")[:-1]
        bl = params.boundary_layer
        dV = np.diff(log.columns["V"])
        outside = ~np.all(np.abs(s) < bl, axis=1)
        outside_steps += int(outside.sum())
        worst_dv = max(worst_dv, dV[outside].max())
        # per axis: b_hat_i only moves while |s_i| is outside the layer
        inside_axis = np.abs(s) < bl
        db = np.diff(log.group("b_hat"), axis=0)
        frozen &= bool(np.all(db[inside_axis] == 0.0))
        inside_checks += int(inside_axis.sum())
        all_inside = ~outside
        if all_inside.any():
            frozen &= bool(np.all(np.diff(log.group("a_hat"), axis=0)[all_inside] == 0.0))
    elapsed = time.perf_counter() - start
    ok = worst_dv <= 1e-6 and frozen
    report(7, ok, f"max dV outside layer {worst_dv:.2e} over {outside_steps} steps, "
                  f"estimates frozen on {inside_checks} inside samples: {frozen} "
                  f"(runs at 10 kHz, 50 % and 150 % initial model)")
    assert ok


# -- 8. payload robustness -----------------------------------------------------------

def _circle_run(kind, payload):
    cfg = cfgmod.load_config(CONFIGS / "circle.yaml")
    plant = cfgmod.build_plant(cfg, payload)
    ctrl = cfgmod.build_controller(cfg, kind)
    q0, qd0 = cfgmod.build_initial_state(cfg)
    log = integrate(plant, ctrl, cfgmod.build_sim(cfg, SEED), q0, qd0)
    return log, metrics(log, window_start=cfg.metrics.window_start)["rms_error"]


@pytest.fixture(scope="module")
def circle_runs():
    start = time.perf_counter()
    runs = {(kind, m): _circle_run(kind, m) for kind in ("adaptive", "invdyn")
            for m in presets.PAYLOADS}
    return runs, time.perf_counter() - start


def test_criterion_8_payload_robustness(circle_runs, report):
    runs, elapsed = circle_runs
    rms = {key: value[1] for key, value in runs.items()}
    ad = [rms[("adaptive", m)] for m in presets.PAYLOADS]
    inv = [rms[("invdyn", m)] for m in presets.PAYLOADS]
    a_ok = ad[2] <= 1.5 * ad[0]
    b_ok = inv[0] < inv[1] < inv[2] and inv[2] >= 2.0 * ad[2]
    ok = a_ok and b_ok and elapsed < 300.0
    report(8, ok, "rms [m] adaptive " + ", ".join(f"{v:.2e}" for v in ad)
           + " | invdyn " + ", ".join(f"{v:.2e}" for v in inv) + f" | {elapsed:.0f} s")
    assert ok


# -- 9. damped pseudo-inverse --------------------------------------------------------

def _max_slope(cfg):
    """Largest |d/ds| of the damped map s / (s**2 + lam2(s)) on [0, 2 eps], from its derivative."""
    eps, lam2 = cfg.epsilon, cfg.lambda_max ** 2
    s = np.linspace(0.0, eps, 100_001)
    b = 1.0 - lam2 / eps ** 2
    below = np.abs((lam2 - b * s ** 2) / (b * s ** 2 + lam2) ** 2).max()
    return max(below, 1.0 / eps ** 2)  # above eps the map is 1/s


def test_criterion_9_damped_pinv(report):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    U, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    V, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    exact_err = bound_ratio = slope_ratio = seam = 0.0
    for cfg in (DampedPinvConfig(), presets.tracking_pinv()):
        eps = cfg.epsilon
        sigmas = np.linspace(0.0, 2.0 * eps, 1000)
        bound = max(1.0 / eps, 1.0 / cfg.lambda_max)
        lipschitz = _max_slope(cfg)
        prev = None
        for s in sigmas:
            J = U @ np.diag([0.5, 0.2, s]) @ V[:3]
            P = damped_pinv(J, cfg)
            bound_ratio = max(bound_ratio, np.linalg.norm(P, 2) / bound)
            if s >= eps:
                exact_err = max(exact_err, np.abs(P - np.linalg.pinv(J)).max())
            if prev is not None:
                step = np.linalg.norm(P - prev, 2) / (sigmas[1] - sigmas[0])
                slope_ratio = max(slope_ratio, step / lipschitz)
            prev = P
        J_lo = U @ np.diag([0.5, 0.2, eps * (1 - 1e-9)]) @ V[:3]
        J_hi = U @ np.diag([0.5, 0.2, eps * (1 + 1e-9)]) @ V[:3]
        seam = max(seam, np.linalg.norm(damped_pinv(J_lo, cfg) - damped_pinv(J_hi, cfg), 2))
    elapsed = time.perf_counter() - start
    # the two large singular values also feel the damping, hence the 1 % allowance
    ok = exact_err <= 1e-10 and bound_ratio <= 1.0 + 1e-12 and slope_ratio <= 1.01 \
        and seam <= 1e-6 and elapsed < 5.0
    report(9, ok, f"exactness err {exact_err:.2e}, |J+|/bound {bound_ratio:.3f}, "
                  f"sweep slope / Lipschitz bound {slope_ratio:.3f}, jump across eps {seam:.2e}, "
                  f"{elapsed:.2f} s")
    assert ok


# -- 10. determinism -----------------------------------------------------------------

def test_criterion_10_determinism(regulation_logs, circle_runs, report):
    runs, _ = circle_runs
    same = {
        "regulation 50 %": regulation_logs[0.5][0].to_csv() == _regulation_run(0.5)[0].to_csv(),
        "adaptive 25 g circle": runs[("adaptive", 0.025)][0].to_csv()
        == _circle_run("adaptive", 0.025)[0].to_csv(),
    }
    noisy = _short_noisy_run()
    same["noisy excitation"] = noisy == _short_noisy_run()
    ok = all(same.values())
    report(10, ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok


def _short_noisy_run():
    model = presets.default_arm()
    sim = SimConfig(duration=5.0, seed=SEED, noise_std=1e-3)
    return integrate(PlantTruth(model), FeedforwardController(2), sim, presets.BENT_START).to_csv()


def test_geometry_is_the_reference_arm():
    # the suite above relies on the reference arm; keep the fixture honest
    assert presets.default_arm().geometry[0] == SegmentGeometry(0.2, 0.015, 3e-4)
