"""Euler-Lagrange dynamics of a PCC arm with point masses at the chord midpoints.

All terms are linear in the coefficient vector
``a = (m_1..m_n, k_s1..k_sn, k_d1..k_dn, m_tip)`` for fixed geometry, which is
what the regressor, the identification and the adaptive controller rely on.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _core
from .errors import InvalidInputError, SingularConfigurationError
from .kinematics import SegmentGeometry, _checked, as_flat, lengths_of

MAX_CONDITION = 1e12
DEFAULT_P_MAX = 40e3


def coefficient_names(n: int) -> tuple[str, ...]:
    return (tuple(f"m_{i + 1}" for i in range(n))
            + tuple(f"k_s_{i + 1}" for i in range(n))
            + tuple(f"k_d_{i + 1}" for i in range(n))
            + ("m_tip",))


@dataclass(frozen=True)
class CoefficientVector:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.names),):
            raise InvalidInputError("coefficient values and basis names differ in length")

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class DynamicParameters:
    mass: tuple[float, ...]
    stiffness: tuple[float, ...]
    damping: tuple[float, ...]
    gravity: float = 9.81
    tip_payload_mass: float = 0.0

    def __post_init__(self):
        for name in ("mass", "stiffness", "damping"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(getattr(self, name))))
        if not len(self.mass) == len(self.stiffness) == len(self.damping):
            raise InvalidInputError("mass, stiffness and damping need one entry per segment")
        if any(m <= 0 for m in self.mass):
            raise InvalidInputError("segment masses must be > 0")
        if any(k < 0 for k in self.stiffness) or any(k < 0 for k in self.damping):
            raise InvalidInputError("stiffness and damping must be >= 0")
        if self.gravity < 0 or self.tip_payload_mass < 0:
            raise InvalidInputError("gravity and tip_payload_mass must be >= 0")

    @property
    def n(self) -> int:
        return len(self.mass)

    def coefficients(self) -> CoefficientVector:
        values = np.r_[self.mass, self.stiffness, self.damping, self.tip_payload_mass]
        return CoefficientVector(values, coefficient_names(self.n))

    @classmethod
    def from_coefficients(cls, a, gravity=9.81) -> "DynamicParameters":
        a = np.asarray(getattr(a, "values", a), dtype=float)
        n = (a.size - 1) // 3
        return cls(tuple(a[:n]), tuple(a[n:2 * n]), tuple(a[2 * n:3 * n]), gravity, float(a[-1]))


@dataclass(frozen=True)
class ArmModel:
    geometry: tuple[SegmentGeometry, ...]
    params: DynamicParameters
    p_max: float = DEFAULT_P_MAX
    _arrays: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "geometry", tuple(self.geometry))
        if len(self.geometry) != self.params.n:
            raise InvalidInputError("geometry and parameters describe different segment counts")
        if any(g.chamber_count != 3 for g in self.geometry):
            raise InvalidInputError("the actuator map supports three chambers per segment")
        object.__setattr__(self, "_arrays", {
            "lengths": lengths_of(self.geometry),
            "area": np.array([g.chamber_area for g in self.geometry]),
            "offset": np.array([g.chamber_offset for g in self.geometry]),
        })

    @property
    def n(self) -> int:
        return len(self.geometry)

    @property
    def lengths(self) -> np.ndarray:
        return self._arrays["lengths"]

    @property
    def chamber_area(self) -> np.ndarray:
        return self._arrays["area"]

    @property
    def chamber_offset(self) -> np.ndarray:
        return self._arrays["offset"]

    @property
    def coefficients(self) -> np.ndarray:
        return self.params.coefficients().values

    def with_params(self, **changes) -> "ArmModel":
        return replace(self, params=replace(self.params, **changes))

    def with_payload(self, mass: float) -> "ArmModel":
        return self.with_params(tip_payload_mass=float(mass))


class DynamicTerms(NamedTuple):
    M: np.ndarray
    C: np.ndarray
    D: np.ndarray
    g_vec: np.ndarray
    k_vec: np.ndarray


def check_pressures(p, model: ArmModel) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (3 * model.n,):
        raise InvalidInputError(f"expected {3 * model.n} chamber pressures, got shape {p.shape}")
    if np.any(p < 0) or np.any(p > model.p_max):
        raise InvalidInputError(f"pressures must lie in [0, {model.p_max}] Pa")
    return p


def _state(model, q, qd=None):
    q = as_flat(q)
    if q.size != 2 * model.n:
        raise InvalidInputError(f"{model.n} segments but configuration has {q.size // 2}")
    if qd is None:
        return q
    qd = np.asarray(qd, dtype=float)
    if qd.shape != q.shape:
        raise InvalidInputError("velocity and configuration shapes differ")
    return q, qd


def inertia_matrix(model: ArmModel, q) -> np.ndarray:
    q = _state(model, q)
    Mb = _core.body_inertias(q, model.lengths)
    return _core.inertia_from_coefficients(Mb, model.coefficients, model.n)


def inertia_derivatives(model: ArmModel, q) -> np.ndarray:
    """``dM[k] = ∂M/∂q_k`` by central differences of the inertia matrix."""
    q = _state(model, q)
    dMb = _core.body_inertia_derivatives(q, model.lengths)
    a = model.coefficients
    masses = np.r_[a[:model.n], a[-1]]
    return np.tensordot(masses, dMb, axes=1)


def coriolis_matrix(model: ArmModel, q, qd) -> np.ndarray:
    q, qd = _state(model, q, qd)
    return _core.christoffel_matrix(inertia_derivatives(model, q), qd)


def gravity_elastic(model: ArmModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the gravitational and elastic potentials."""
    q = _state(model, q)
    n = model.n
    _, J = _core.body_jacobians(q, model.lengths)
    a = model.coefficients
    masses = np.r_[a[:n], a[-1]]
    g_vec = model.params.gravity * masses @ J[:, 2, :]
    k_vec = np.zeros(2 * n)
    k_vec[1::2] = np.asarray(model.params.stiffness) * q[1::2]
    return g_vec, k_vec


def damping_matrix(model: ArmModel, q) -> np.ndarray:
    q = _state(model, q)
    diag = np.empty(2 * model.n)
    kd = np.asarray(model.params.damping)
    diag[0::2] = kd * q[1::2] ** 2
    diag[1::2] = kd
    return np.diag(diag)


def actuator_map(geom: Sequence[SegmentGeometry], q) -> np.ndarray:
    """Pressure-to-generalized-force map, chambers at 0, 120 and 240 degrees."""
    geom = getattr(geom, "geometry", geom)
    _, q = _checked(geom, q)
    if any(g.chamber_count != 3 for g in geom):
        raise InvalidInputError("the actuator map supports three chambers per segment")
    area = np.array([g.chamber_area for g in geom])
    offset = np.array([g.chamber_offset for g in geom])
    return _core.actuator_map(q, area, offset)


def dynamic_terms(model: ArmModel, q, qd) -> DynamicTerms:
    q, qd = _state(model, q, qd)
    g_vec, k_vec = gravity_elastic(model, q)
    return DynamicTerms(inertia_matrix(model, q), coriolis_matrix(model, q, qd),
                        damping_matrix(model, q), g_vec, k_vec)


def regressor(model: ArmModel, q, qd, qd_r, qdd_r) -> np.ndarray:
    """``Y`` such that ``M qdd_r + C(q, qd) qd_r + D qd + g + k = Y a``.

    Only the geometry and gravity of ``model`` are used.
    """
    q, qd = _state(model, q, qd)
    qd_r = np.asarray(qd_r, dtype=float)
    qdd_r = np.asarray(qdd_r, dtype=float)
    if qd_r.shape != q.shape or qdd_r.shape != q.shape:
        raise InvalidInputError("reference signals must match the configuration size")
    return _core.regressor(q, qd, qd_r, qdd_r, model.lengths, float(model.params.gravity))


def left_side(model: ArmModel, q, qd, qdd) -> np.ndarray:
    """``M qdd + C qd + D qd + g + k`` evaluated term by term."""
    t = dynamic_terms(model, q, qd)
    return t.M @ qdd + t.C @ qd + t.D @ qd + t.g_vec + t.k_vec


def forward_dynamics(model: ArmModel, q, qd, p, d_ext=None) -> np.ndarray:
    q, qd = _state(model, q, qd)
    p = np.asarray(p, dtype=float)
    if p.shape != (3 * model.n,):
        raise InvalidInputError(f"expected {3 * model.n} chamber pressures")
    d = np.zeros(2 * model.n) if d_ext is None else np.asarray(d_ext, dtype=float)
    qdd, cond = _core.forward_dynamics(q, qd, p, d, model.lengths, model.chamber_area,
                                       model.chamber_offset, model.coefficients,
                                       float(model.params.gravity), MAX_CONDITION)
    if not np.all(np.isfinite(qdd)):
        raise SingularConfigurationError(
            f"inertia matrix condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}", cond)
    return qdd


def kinetic_energy(model: ArmModel, q, qd) -> float:
    q, qd = _state(model, q, qd)
    return 0.5 * float(qd @ inertia_matrix(model, q) @ qd)


def potential_energy(model: ArmModel, q) -> float:
    q = _state(model, q)
    n = model.n
    pos = _core.body_positions(q, model.lengths)
    a = model.coefficients
    masses = np.r_[a[:n], a[-1]]
    elastic = 0.5 * float(np.sum(np.asarray(model.params.stiffness) * q[1::2] ** 2))
    return elastic + model.params.gravity * float(masses @ pos[:, 2])


def total_energy(model: ArmModel, q, qd) -> float:
    return kinetic_energy(model, q, qd) + potential_energy(model, q)
