"""A tour of the constant-curvature kinematics on the reference arm.

Run: python3 demos/01_kinematics_tour.py
"""
import numpy as np

from softarm import presets
from softarm.kinematics import (DampedPinvConfig, damped_pinv, forward_kinematics,
                                tip_jacobian, tip_position)

arm = presets.default_arm()

# Straight up: both segments stacked along z.
print("straight tip:", tip_position(arm, np.zeros(4)))

# Bend both segments by half a radian; phi = pi points the bend toward +x.
for i, pose in enumerate(forward_kinematics(arm.geometry, presets.BENT_START), start=1):
    print(f"frame S{i} origin: {np.round(pose.translation, 4)}")

# Near the straight pose the bending-plane angle loses authority, which shows up
# as a vanishing singular value of the tip Jacobian.  The damped pseudo-inverse
# keeps the joint rates bounded there.
cfg = presets.tracking_pinv()
for theta in (0.3, 0.03, 0.003):
    J = tip_jacobian(arm, [0.0, theta, 0.0, theta])
    sigma = np.linalg.svd(J, compute_uv=False)
    plain = np.linalg.norm(np.linalg.pinv(J), 2)
    damped = np.linalg.norm(damped_pinv(J, cfg), 2)
    print(f"theta={theta:<6} sigma_min={sigma[-1]:.2e}  |pinv|={plain:9.1f}  |damped|={damped:7.1f}")

print("default damping schedule:", DampedPinvConfig())
