"""Experiment configuration: a YAML file validated against pydantic models.

Every section rejects keys it does not know, so a typo fails loudly instead
of silently falling back to a default.  The top-level layout is::

    arm:          segment geometry and true dynamic parameters
    sim:          step sizes, duration, seed, measurement noise
    initial:      starting state (defaults to a bent pose)
    controller:   kind, control space, gains, initial estimate
    trajectory:   circle or constant target
    plant:        payload and disturbance schedule
    identify:     which coefficients are measured, smoothing cutoff
    compare:      payload sweep for the head-to-head run
    bench:        segment counts and sample count for the timing run
    output:       file names inside the output directory

``load_config`` turns a file into an ``ExperimentConfig``; the ``build_*``
helpers turn that into library objects.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import presets
from .control import (REFERENCE_ALPHA, REFERENCE_LAMBDA, AdaptiveController,
                      InverseDynamicsController, InverseDynamicsGains, SlidingParams)
from .dynamics import ArmModel, DynamicParameters
from .errors import InvalidInputError
from .kinematics import DampedPinvConfig, SegmentGeometry
from .simulator import (CircleTrajectory, ConstantDisturbance, ConstantTarget,
                        FeedforwardController, NoDisturbance, PlantTruth, SimConfig,
                        SineDisturbance, StepDisturbance)

Vector = Union[float, list[float]]


class ConfigError(InvalidInputError):
    """Configuration could not be read or does not match the schema.

    ``field`` holds the dotted path of the first offending key, when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SegmentSpec(_Strict):
    length: float = Field(gt=0)
    chamber_offset: float = Field(gt=0)
    chamber_area: float = Field(gt=0)
    mass: float = Field(gt=0)
    stiffness: float = Field(ge=0)
    damping: float = Field(ge=0)


class ArmSpec(_Strict):
    segments: list[SegmentSpec] = Field(min_length=1)
    gravity: float = Field(default=9.81, ge=0)
    p_max: float = Field(default=40e3, gt=0)


class SimSpec(_Strict):
    dt_physics: float = 1e-4
    controller_rate: float = 100.0
    duration: float = 10.0
    seed: int = 0
    noise_std: float = Field(default=0.0, ge=0)


class InitialSpec(_Strict):
    q: Optional[list[float]] = None
    qd: Optional[list[float]] = None
    # start on the circle at t = 0 with the matching joint rate
    from_trajectory: bool = False


class FeedforwardSpec(_Strict):
    amplitude: float = Field(default=40e3, ge=0)
    period: float = Field(default=16.0, gt=0)


class AdaptiveSpec(_Strict):
    """Defaults are the 100 Hz tracking gains of ``presets.tracking_gains``.

    The hardware K_D (0.03) is only stable when the loop runs much faster;
    see the notes in ``presets``.  ``Gamma`` left unset means 1e-3 on every
    coefficient and 1e-2 on the tip mass.
    """

    Lambda: Vector = REFERENCE_LAMBDA
    alpha: float = REFERENCE_ALPHA
    K_D: Vector = 1e-3
    Gamma: Optional[Vector] = None
    Psi: Vector = 1e-4
    boundary_layer: Vector = 0.01
    e_clamp: float = 1e-6


class InvdynSpec(_Strict):
    natural_frequency: float = Field(default=REFERENCE_LAMBDA, gt=0)
    K_null: float = Field(default=5.0, ge=0)


class PinvSpec(_Strict):
    epsilon: float = Field(default=0.05, gt=0)
    lambda_max: float = Field(default=0.1, gt=0)


def _tracking_pinv():
    cfg = presets.tracking_pinv()
    return PinvSpec(epsilon=cfg.epsilon, lambda_max=cfg.lambda_max)


class ControllerSpec(_Strict):
    kind: Literal["feedforward", "adaptive", "invdyn"] = "feedforward"
    space: Literal["task", "curvature"] = "task"
    feedforward: FeedforwardSpec = FeedforwardSpec()
    adaptive: AdaptiveSpec = AdaptiveSpec()
    invdyn: InvdynSpec = InvdynSpec()
    # task-space inversion; the default suits Jacobians whose singular values
    # sit near 0.03 m/rad, as on the reference arm
    pinv: PinvSpec = Field(default_factory=_tracking_pinv)
    allocation_pinv: PinvSpec = PinvSpec()
    # the controller starts from the true coefficients times this factor,
    # with the tip mass taken from the nominal model (no payload)
    initial_estimate_scale: float = Field(default=1.0, gt=0)


class TrajectorySpec(_Strict):
    kind: Literal["circle", "constant"] = "circle"
    radius: float = Field(default=0.12, gt=0)
    omega: float = 0.785
    center: list[float] = Field(default_factory=lambda: list(presets.CIRCLE_CENTER),
                                min_length=3, max_length=3)
    target: Optional[list[float]] = None

    @model_validator(mode="after")
    def _target_for_constant(self):
        if self.kind == "constant" and self.target is None:
            raise ValueError("a constant trajectory needs 'target'")
        return self


class DisturbanceSpec(_Strict):
    kind: Literal["none", "constant", "step", "sine"] = "none"
    value: Optional[list[float]] = None
    time: float = 0.0
    amplitude: Optional[list[float]] = None
    frequency: float = 1.0
    phase: float = 0.0

    @model_validator(mode="after")
    def _fields_for_kind(self):
        if self.kind in ("constant", "step") and self.value is None:
            raise ValueError(f"a {self.kind} disturbance needs 'value'")
        if self.kind == "sine" and self.amplitude is None:
            raise ValueError("a sine disturbance needs 'amplitude'")
        return self


class PlantSpec(_Strict):
    payload: float = Field(default=0.0, ge=0)
    disturbance: DisturbanceSpec = DisturbanceSpec()


class IdentifySpec(_Strict):
    # measured coefficients by name; None means "segment and tip masses"
    known: Optional[dict[str, float]] = None
    cutoff: Optional[float] = Field(default=None, gt=0)
    held_pressures: bool = True


class CompareSpec(_Strict):
    payloads: list[float] = Field(default_factory=lambda: list(presets.PAYLOADS), min_length=1)
    controllers: list[Literal["adaptive", "invdyn"]] = Field(
        default_factory=lambda: ["adaptive", "invdyn"], min_length=1)
    window_start: Optional[float] = None


class BenchSpec(_Strict):
    segments: list[int] = Field(default_factory=lambda: [2], min_length=1)
    samples: int = Field(default=2000, gt=0)
    warmup: int = Field(default=50, ge=0)


class OutputSpec(_Strict):
    log: str = "trajectory.csv"
    metrics: str = "metrics.json"
    report: str = "identification.json"
    compare: str = "compare.json"
    bench: str = "bench.json"


class MetricsSpec(_Strict):
    threshold: float = Field(default=1e-3, gt=0)
    window_start: Optional[float] = None
    rms_bound: Optional[float] = Field(default=None, gt=0)


class ExperimentConfig(_Strict):
    arm: ArmSpec
    sim: SimSpec = SimSpec()
    initial: InitialSpec = InitialSpec()
    controller: ControllerSpec = ControllerSpec()
    trajectory: TrajectorySpec = TrajectorySpec()
    plant: PlantSpec = PlantSpec()
    identify: IdentifySpec = IdentifySpec()
    compare: CompareSpec = CompareSpec()
    metrics: MetricsSpec = MetricsSpec()
    bench: BenchSpec = BenchSpec()
    output: OutputSpec = OutputSpec()


def _field_path(err: ValidationError) -> str:
    loc = err.errors()[0]["loc"]
    return ".".join(str(part) for part in loc)


def parse_config(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a mapping at the top level")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = _field_path(exc)
        raise ConfigError(f"{path}: {first['msg']}", path) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return parse_config(data)


def reference_config(n: int = 2) -> ExperimentConfig:
    """Configuration of the reference arm in ``presets`` with every other section at its default."""
    model = presets.default_arm(n)
    p = model.params
    segments = [SegmentSpec(length=g.length, chamber_offset=g.chamber_offset,
                            chamber_area=g.chamber_area, mass=p.mass[i],
                            stiffness=p.stiffness[i], damping=p.damping[i])
                for i, g in enumerate(model.geometry)]
    return ExperimentConfig(arm=ArmSpec(segments=segments))


# -- builders ---------------------------------------------------------------------

def build_model(cfg: ExperimentConfig, payload: float = 0.0) -> ArmModel:
    segs = cfg.arm.segments
    geometry = [SegmentGeometry(s.length, s.chamber_offset, s.chamber_area) for s in segs]
    params = DynamicParameters(tuple(s.mass for s in segs), tuple(s.stiffness for s in segs),
                               tuple(s.damping for s in segs), cfg.arm.gravity, payload)
    return ArmModel(tuple(geometry), params, cfg.arm.p_max)


def build_sim(cfg: ExperimentConfig, seed: Optional[int] = None) -> SimConfig:
    s = cfg.sim
    return SimConfig(s.dt_physics, s.controller_rate, s.duration, "rk4",
                     s.seed if seed is None else seed, s.noise_std)


def build_disturbance(cfg: ExperimentConfig):
    d = cfg.plant.disturbance
    dof = 2 * len(cfg.arm.segments)
    vec = d.value if d.value is not None else d.amplitude
    if vec is not None and len(vec) != dof:
        raise ConfigError(f"plant.disturbance needs {dof} entries, got {len(vec)}",
                          "plant.disturbance")
    if d.kind == "none":
        return NoDisturbance(dof)
    if d.kind == "constant":
        return ConstantDisturbance(tuple(d.value))
    if d.kind == "step":
        return StepDisturbance(tuple(d.value), d.time)
    return SineDisturbance(tuple(d.amplitude), d.frequency, d.phase)


def build_plant(cfg: ExperimentConfig, payload: Optional[float] = None) -> PlantTruth:
    payload = cfg.plant.payload if payload is None else payload
    return PlantTruth(build_model(cfg), build_disturbance(cfg), payload or None)


def build_trajectory(cfg: ExperimentConfig, space: str):
    tr = cfg.trajectory
    if tr.kind == "circle":
        if space != "task":
            raise ConfigError("a circle trajectory needs controller.space = task",
                              "controller.space")
        return CircleTrajectory(tr.radius, tr.omega, tuple(tr.center))
    dim = 3 if space == "task" else 2 * len(cfg.arm.segments)
    if len(tr.target) != dim:
        raise ConfigError(f"trajectory.target needs {dim} entries in {space} space",
                          "trajectory.target")
    return ConstantTarget(tuple(tr.target))


def _per_axis(value, size, name):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1:
        return np.full(size, float(v[0]))
    if v.size != size:
        raise ConfigError(f"controller.adaptive.{name} needs 1 or {size} entries",
                          f"controller.adaptive.{name}")
    return v


def build_sliding_params(cfg: ExperimentConfig) -> SlidingParams:
    a = cfg.controller.adaptive
    n = len(cfg.arm.segments)
    dof = 2 * n
    task_dim = 3 if cfg.controller.space == "task" else dof
    try:
        return SlidingParams(
            Lambda=_per_axis(a.Lambda, task_dim, "Lambda"), alpha=a.alpha,
            K_D=_per_axis(a.K_D, dof, "K_D"), Gamma=(np.r_[np.full(3 * n, 1e-3), 1e-2] if a.Gamma is None
                   else _per_axis(a.Gamma, 3 * n + 1, "Gamma")),
            Psi=_per_axis(a.Psi, dof, "Psi"),
            boundary_layer=_per_axis(a.boundary_layer, dof, "boundary_layer"),
            e_clamp=a.e_clamp)
    except ConfigError:
        raise
    except InvalidInputError as exc:
        raise ConfigError(f"controller.adaptive: {exc}", "controller.adaptive") from None


def build_controller(cfg: ExperimentConfig, kind: Optional[str] = None):
    """Controller from the config; the nominal model never carries the payload."""
    c = cfg.controller
    kind = kind or c.kind
    model = build_model(cfg)
    n = model.n
    if kind == "feedforward":
        return FeedforwardController(n, c.feedforward.amplitude, c.feedforward.period)
    traj = build_trajectory(cfg, c.space)
    pinv = DampedPinvConfig(c.pinv.epsilon, c.pinv.lambda_max)
    alloc = DampedPinvConfig(c.allocation_pinv.epsilon, c.allocation_pinv.lambda_max)
    if kind == "adaptive":
        a0 = model.coefficients * c.initial_estimate_scale
        return AdaptiveController(model, build_sliding_params(cfg), traj, c.space, a0, pinv, alloc)
    dim = 3 if c.space == "task" else 2 * n
    gains = InverseDynamicsGains.critically_damped(c.invdyn.natural_frequency, dim, c.invdyn.K_null)
    return InverseDynamicsController(model, gains, traj, c.space, pinv, alloc)


def build_initial_state(cfg: ExperimentConfig):
    """``(q0, qd0)``: explicit values, the start of the circle, or the bent default pose."""
    n = len(cfg.arm.segments)
    init = cfg.initial
    if init.from_trajectory:
        if cfg.trajectory.kind != "circle":
            raise ConfigError("initial.from_trajectory needs a circle trajectory",
                              "initial.from_trajectory")
        c = cfg.controller.pinv
        return presets.circle_start(build_model(cfg), build_trajectory(cfg, "task"),
                                    DampedPinvConfig(c.epsilon, c.lambda_max))
    q0 = np.array(init.q if init.q is not None else [np.pi, 0.5] * n, dtype=float)
    qd0 = np.zeros(2 * n) if init.qd is None else np.array(init.qd, dtype=float)
    for name, v in (("q", q0), ("qd", qd0)):
        if v.shape != (2 * n,):
            raise ConfigError(f"initial.{name} needs {2 * n} entries", f"initial.{name}")
    return q0, qd0
