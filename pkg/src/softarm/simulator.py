"""Closed-loop simulation, reference signals, trajectory logs and tracking metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import _core
from .control import lyapunov
from .dynamics import MAX_CONDITION, ArmModel, inertia_matrix
from .errors import InvalidInputError, SimulationFaultError, SingularConfigurationError

SCHEMA_VERSION = 1


def pressure_profile(t, amplitude, period, i):
    """Feed-forward chamber pressure ``A sin²(2πt/T + 2πi/3)`` for chamber ``i`` of a segment."""
    if not period > 0:
        raise InvalidInputError("period must be > 0")
    return amplitude * np.sin(2 * np.pi * t / period + i * 2 * np.pi / 3) ** 2


def circle_trajectory(t, radius=0.12, omega=0.785, center=(0.0, 0.0, 0.0)):
    """Position, velocity and acceleration on a horizontal circle."""
    if not radius > 0:
        raise InvalidInputError("radius must be > 0")
    c, s = np.cos(omega * t), np.sin(omega * t)
    center = np.asarray(center, dtype=float)
    x = center + radius * np.array([c, s, 0.0])
    xd = radius * omega * np.array([-s, c, 0.0])
    xdd = -radius * omega ** 2 * np.array([c, s, 0.0])
    return x, xd, xdd


@dataclass(frozen=True)
class CircleTrajectory:
    radius: float = 0.12
    omega: float = 0.785
    center: tuple = (0.0, 0.0, 0.3)

    def __call__(self, t):
        return circle_trajectory(t, self.radius, self.omega, self.center)


@dataclass(frozen=True)
class ConstantTarget:
    """Set-point regulation: the target with zero rate and acceleration."""

    value: tuple

    def __call__(self, t):
        v = np.asarray(self.value, dtype=float)
        return v, np.zeros_like(v), np.zeros_like(v)


class FeedforwardController:
    """Open-loop excitation: every segment receives the same three-chamber profile."""

    def __init__(self, n, amplitude=40e3, period=16.0):
        self.n = n
        self.amplitude = amplitude
        self.period = period
        self.last = {}

    def reset(self):
        self.last = {}

    def __call__(self, t, q, qd, dt):
        seg = [pressure_profile(t, self.amplitude, self.period, i) for i in range(3)]
        return np.tile(seg, self.n)


# -- disturbances ------------------------------------------------------------

@dataclass(frozen=True)
class NoDisturbance:
    dof: int

    @property
    def bound(self):
        return np.zeros(self.dof)

    def __call__(self, t):
        return np.zeros(self.dof)


@dataclass(frozen=True)
class ConstantDisturbance:
    value: tuple

    @property
    def bound(self):
        return np.abs(np.asarray(self.value, dtype=float))

    def __call__(self, t):
        return np.asarray(self.value, dtype=float)


@dataclass(frozen=True)
class StepDisturbance:
    value: tuple
    time: float

    @property
    def bound(self):
        return np.abs(np.asarray(self.value, dtype=float))

    def __call__(self, t):
        v = np.asarray(self.value, dtype=float)
        return v if t >= self.time else np.zeros_like(v)


@dataclass(frozen=True)
class SineDisturbance:
    amplitude: tuple
    frequency: float
    phase: float = 0.0

    @property
    def bound(self):
        return np.abs(np.asarray(self.amplitude, dtype=float))

    def __call__(self, t):
        return np.asarray(self.amplitude, dtype=float) * np.sin(2 * np.pi * self.frequency * t + self.phase)


@dataclass
class PlantTruth:
    """The simulated arm: true parameters, disturbance and payload schedule.

    ``payload`` is a constant tip mass, a callable of time, or ``None`` to keep
    the mass stored in ``model``.
    """

    model: ArmModel
    disturbance: Optional[Callable] = None
    payload: Union[None, float, Callable] = None

    def __post_init__(self):
        if self.disturbance is None:
            self.disturbance = NoDisturbance(2 * self.model.n)

    @property
    def disturbance_bound(self) -> np.ndarray:
        return np.asarray(self.disturbance.bound, dtype=float)

    def payload_at(self, t) -> float:
        if self.payload is None:
            return self.model.params.tip_payload_mass
        if callable(self.payload):
            return float(self.payload(t))
        return float(self.payload)

    def coefficients_at(self, t) -> np.ndarray:
        a = self.model.coefficients.copy()
        a[-1] = self.payload_at(t)
        return a


@dataclass(frozen=True)
class SimConfig:
    dt_physics: float = 1e-4
    controller_rate: float = 100.0
    duration: float = 10.0
    integrator: str = "rk4"
    seed: int = 0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.integrator != "rk4":
            raise InvalidInputError("only the fixed-step 'rk4' integrator is available")
        if not (self.dt_physics > 0 and self.controller_rate > 0 and self.duration > 0):
            raise InvalidInputError("dt_physics, controller_rate and duration must be > 0")
        ratio = 1.0 / (self.controller_rate * self.dt_physics)
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
            raise InvalidInputError("controller period must be an integer multiple of dt_physics")

    @property
    def substeps(self) -> int:
        return int(round(1.0 / (self.controller_rate * self.dt_physics)))

    @property
    def controller_dt(self) -> float:
        return 1.0 / self.controller_rate

    @property
    def ticks(self) -> int:
        return int(round(self.duration * self.controller_rate))


# -- logs ----------------------------------------------------------------------

@dataclass
class TrajectoryLog:
    """Column store of per-tick samples; column groups use ``<name>_<index>`` keys."""

    columns: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.columns.get("t", ()))

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def group(self, name: str) -> np.ndarray:
        keys = [k for k in self.columns if k.rsplit("_", 1)[0] == name and k.rsplit("_", 1)[1].isdigit()]
        if not keys:
            raise KeyError(name)
        keys.sort(key=lambda k: int(k.rsplit("_", 1)[1]))
        return np.column_stack([self.columns[k] for k in keys])

    def has(self, name: str) -> bool:
        try:
            self.group(name)
        except KeyError:
            return name in self.columns
        return True

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={SCHEMA_VERSION}\n")
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        names = list(self.columns)
        buf.write(",".join(names) + "\n")
        data = np.column_stack([np.asarray(self.columns[k], dtype=float) for k in names])
        for row in data:
            buf.write(",".join(format(v, ".17g") for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        text = Path(path).read_text()
        meta = {}
        header = None
        rows = []
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
            if not row:
                continue
            if row[0].startswith("#"):
                key, _, value = ",".join(row)[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = row
                continue
            if len(row) != len(header):
                raise InvalidInputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise InvalidInputError(f"line {lineno}: {exc}") from None
        if header is None:
            raise InvalidInputError("log has no header row")
        if meta.get("schema") != str(SCHEMA_VERSION):
            raise InvalidInputError(f"unsupported log schema {meta.get('schema')!r}")
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        t = data[:, header.index("t")] if "t" in header else None
        if t is not None and np.any(np.diff(t) <= 0):
            raise InvalidInputError("log timestamps are not strictly increasing")
        meta.pop("schema")
        return cls({k: data[:, i] for i, k in enumerate(header)}, meta)


def _put(cols, name, values):
    for i, v in enumerate(np.atleast_1d(values)):
        cols.setdefault(f"{name}_{i}", []).append(float(v))


def integrate(plant: PlantTruth, controller, cfg: SimConfig, q0, qd0=None) -> TrajectoryLog:
    """Run the closed loop and log one row per controller tick.

    Pressures and the disturbance are held constant between ticks while the
    plant advances with ``cfg.substeps`` RK4 steps.  ``controller`` is called
    as ``controller(t, q_measured, qd, dt)`` and may expose a ``last`` dict
    with ``e``, ``s``, ``a_hat``, ``b_hat`` and ``saturated`` entries; when
    ``s``/``a_hat``/``b_hat`` are present the Lyapunov value is logged too,
    using the plant's true coefficients and disturbance bound.
    """
    model = plant.model
    n = model.n
    q = np.array(q0, dtype=float)
    qd = np.zeros(2 * n) if qd0 is None else np.array(qd0, dtype=float)
    if q.shape != (2 * n,) or qd.shape != (2 * n,):
        raise InvalidInputError("initial state does not match the plant's segment count")
    rng = np.random.default_rng(cfg.seed)
    if hasattr(controller, "reset"):
        controller.reset()
    dt_c = cfg.controller_dt
    cols: dict = {"t": []}
    L, area, offset = model.lengths, model.chamber_area, model.chamber_offset
    gravity = float(model.params.gravity)
    params = getattr(controller, "params", None)

    for k in range(cfg.ticks):
        t = k * dt_c
        q_meas = q + rng.normal(0.0, cfg.noise_std, q.shape) if cfg.noise_std > 0 else q
        p = np.asarray(controller(t, q_meas, qd, dt_c), dtype=float)
        a_true = plant.coefficients_at(t)
        d = np.asarray(plant.disturbance(t), dtype=float)
        last = getattr(controller, "last", {}) or {}

        cols["t"].append(t)
        _put(cols, "q", q_meas)
        _put(cols, "qd", qd)
        _put(cols, "p", p)
        _put(cols, "x_tip", _core.chain(q, L)[1][-1])
        if "e" in last:
            _put(cols, "e", last["e"])
        if "s" in last:
            _put(cols, "s", last["s"])
        if "s_delta" in last:
            _put(cols, "s_delta", last["s_delta"])
        if "s" in last and "a_hat" in last and params is not None:
            M = inertia_matrix(model.with_payload(a_true[-1]), q)
            V = lyapunov(M, last["s"], a_true, last["a_hat"], plant.disturbance_bound,
                         last["b_hat"], params)
            cols.setdefault("V", []).append(V)
            _put(cols, "a_hat", last["a_hat"])
            _put(cols, "b_hat", last["b_hat"])
        sat = last.get("saturated")
        flags = 0 if sat is None else int(sum(1 << i for i, f in enumerate(sat) if f))
        cols.setdefault("sat_flags", []).append(flags)

        q_new, qd_new, ok, cond = _core.rk4_steps(q, qd, p, d, L, area, offset, a_true, gravity,
                                                  cfg.dt_physics, cfg.substeps, MAX_CONDITION)
        if not ok:
            if cond > MAX_CONDITION:
                raise SingularConfigurationError(
                    f"singular configuration at t={t:.4f}s (condition {cond:.3g})", cond, t)
            raise SimulationFaultError(f"non-finite state at t={t:.4f}s", t,
                                       {"q": q.tolist(), "qd": qd.tolist(), "p": p.tolist()})
        q, qd = q_new, qd_new

    log = TrajectoryLog({k: np.asarray(v, dtype=float) for k, v in cols.items()},
                        {"n": n, "controller_rate": cfg.controller_rate,
                         "dt_physics": cfg.dt_physics, "seed": cfg.seed})
    log.final_state = (q, qd)
    return log


def metrics(log: TrajectoryLog, threshold=1e-3, window_start=None, boundary_layer=None,
            v_tol=1e-6) -> dict:
    """Tracking statistics of a log.

    The RMS window starts at ``window_start`` if given, otherwise at the first
    tick where every ``|s_i|`` is inside ``boundary_layer`` (when both are
    available), otherwise at the first sample.
    """
    if len(log) == 0:
        raise InvalidInputError("empty log")
    t = log.t
    e = np.linalg.norm(log.group("e"), axis=1)
    reached = np.flatnonzero(e < threshold)
    reach_time = float(t[reached[0]]) if reached.size else None

    start = 0
    if window_start is not None:
        start = int(np.searchsorted(t, window_start))
    elif boundary_layer is not None and log.has("s"):
        inside = np.all(np.abs(log.group("s")) < np.asarray(boundary_layer), axis=1)
        hits = np.flatnonzero(inside)
        start = int(hits[0]) if hits.size else 0
    window = e[start:] if start < e.size else e[-1:]

    violations = None
    if "V" in log.columns:
        dV = np.diff(log.columns["V"])
        mask = np.ones(dV.size, dtype=bool)
        if boundary_layer is not None and log.has("s"):
            # a step counts as outside unless every component is inside the layer
            mask = ~np.all(np.abs(log.group("s")[:-1]) < np.asarray(boundary_layer), axis=1)
        violations = int(np.count_nonzero(dV[mask] > v_tol))

    sat = log.columns.get("sat_flags")
    return {
        "rms_error": float(np.sqrt(np.mean(window ** 2))),
        "max_error": float(window.max()),
        "reach_time": reach_time,
        "V_monotone_violations": violations,
        "saturation_fraction": float(np.mean(sat > 0)) if sat is not None else 0.0,
    }
