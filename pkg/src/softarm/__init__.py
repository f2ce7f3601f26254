"""Dynamics, identification and adaptive control of piecewise-constant-curvature soft arms."""

from .control import (AdaptiveController, InverseDynamicsController, InverseDynamicsGains,
                      SlidingParams, adaptive_control_step, curvature_reference,
                      inverse_dynamics_control, lyapunov, sat, sig_alpha, task_reference)
from .dynamics import (ArmModel, CoefficientVector, DynamicParameters, DynamicTerms,
                       actuator_map, coriolis_matrix, dynamic_terms, forward_dynamics,
                       inertia_matrix, regressor, total_energy)
from .errors import (ControllerFaultError, InvalidInputError, RankDeficientError,
                     SimulationFaultError, SingularConfigurationError, SoftArmError)
from .identification import CoefficientSplit, SampleBatch, identify
from .kinematics import (ArmConfiguration, DampedPinvConfig, Pose, SegmentConfig,
                         SegmentGeometry, damped_pinv, forward_kinematics, position_jacobians,
                         segment_transform, tip_jacobian, tip_position)
from .simulator import (CircleTrajectory, ConstantTarget, PlantTruth, SimConfig, TrajectoryLog,
                        integrate, metrics)

__version__ = "0.1.0"
