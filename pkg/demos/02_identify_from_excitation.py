"""Excite the arm with the three-chamber sin² profile, then recover stiffness and damping.

The masses are treated as measured; the four elastic and damping
coefficients are estimated by least squares.  Pass a duration in seconds
as the first argument (default 30).

Run: python3 demos/02_identify_from_excitation.py [seconds]
"""
import sys

from softarm import presets
from softarm.identification import SampleBatch, identify
from softarm.simulator import FeedforwardController, PlantTruth, SimConfig, integrate

duration = float(sys.argv[1]) if len(sys.argv) > 1 else 30.0
arm = presets.default_arm()
truth = dict(zip(("k_s_1", "k_s_2", "k_d_1", "k_d_2"), presets.STIFFNESS + presets.DAMPING))

for noise in (0.0, 1e-3):
    sim = SimConfig(duration=duration, noise_std=noise, seed=1)
    log = integrate(PlantTruth(arm), FeedforwardController(2), sim, presets.BENT_START)
    report = identify(SampleBatch.from_log(log), arm)
    print(f"q noise {noise:g} rad, {report.sample_count} samples, "
          f"condition {report.condition_number:.2f}")
    for name, value in report.coefficients.items():
        err = (value - truth[name]) / truth[name]
        print(f"  {name:6s} {value:.5f}  (truth {truth[name]:.3f}, {100 * err:+.2f} %)")
