"""Hold a curvature set-point with a half-wrong model and a constant disturbance.

Prints the Lyapunov function along the run and how much of the time each
sliding variable spends inside the boundary layer, where adaptation stops.

Run: python3 demos/04_lyapunov_regulation.py
"""
import numpy as np

from softarm import presets
from softarm.control import AdaptiveController
from softarm.simulator import ConstantDisturbance, ConstantTarget, PlantTruth, SimConfig, integrate

arm = presets.default_arm()
params = presets.regulation_gains()
ctrl = AdaptiveController(arm, params, ConstantTarget(tuple(presets.REGULATION_TARGET)),
                          "curvature", a0=0.5 * arm.coefficients)
plant = PlantTruth(arm, ConstantDisturbance((2e-3, -3e-3, 1e-3, 2e-3)))
log = integrate(plant, ctrl, SimConfig(duration=2.0, controller_rate=10_000.0), presets.BENT_START)

V = log.columns["V"]
for t in (0.0, 0.1, 0.5, 1.0, 1.9999):
    k = int(round(t * 10_000))
    print(f"t={t:6.3f}s  V={V[k]:.4e}  |e|={np.linalg.norm(log.group('e')[k]):.2e} rad")

inside = np.abs(log.group("s")) < params.boundary_layer
print("fraction of ticks inside the layer per axis:", np.round(inside.mean(axis=0), 3))
print("largest V increase over one tick:", f"{np.diff(V).max():.2e}")
print("b_hat at the end:", np.round(log.group("b_hat")[-1], 5), "true bound:", plant.disturbance_bound)
