"""Piecewise-constant-curvature kinematics.

Each segment is a constant-curvature arc described by the bending-plane
angle ``phi`` and the curvature angle ``theta``.  A whole arm stacks the
pairs into ``q = (phi_1, theta_1, ..., phi_n, theta_n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _core
from .errors import InvalidInputError

THETA_SWITCH = _core.THETA_SWITCH


def wrap_to_pi(x):
    """Wrap an angle in radians to the interval (-pi, pi]; in-range values pass through untouched."""
    x = np.asarray(x, dtype=float)
    wrapped = np.pi - np.mod(np.pi - x, 2 * np.pi)
    return np.where((x > -np.pi) & (x <= np.pi), x, wrapped)


@dataclass(frozen=True)
class SegmentConfig:
    phi: float
    theta: float
    theta_limit: float = field(default=2 * np.pi, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.phi) and np.isfinite(self.theta)):
            raise InvalidInputError(f"non-finite segment configuration ({self.phi}, {self.theta})")
        if abs(self.theta) >= self.theta_limit:
            raise InvalidInputError(f"|theta|={abs(self.theta):.4g} exceeds bend limit {self.theta_limit:.4g}")
        object.__setattr__(self, "phi", float(wrap_to_pi(self.phi)))
        object.__setattr__(self, "theta", float(self.theta))


@dataclass(frozen=True)
class ArmConfiguration:
    segments: tuple[SegmentConfig, ...]

    @classmethod
    def from_flat(cls, q) -> "ArmConfiguration":
        q = np.asarray(q, dtype=float)
        if q.ndim != 1 or q.size % 2:
            raise InvalidInputError(f"expected flat vector of even length, got shape {q.shape}")
        return cls(tuple(SegmentConfig(q[2 * i], q[2 * i + 1]) for i in range(q.size // 2)))

    @property
    def n(self) -> int:
        return len(self.segments)

    def flat(self) -> np.ndarray:
        return np.array([v for s in self.segments for v in (s.phi, s.theta)], dtype=float)


@dataclass(frozen=True)
class SegmentGeometry:
    """Segment length plus the chamber layout used by the actuator map."""

    length: float
    chamber_offset: float = 0.02
    chamber_area: float = 5e-4
    chamber_count: int = 3

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidInputError("segment length must be > 0")
        if not self.chamber_offset > 0:
            raise InvalidInputError("chamber_offset must be > 0")
        if not self.chamber_area > 0:
            raise InvalidInputError("chamber_area must be > 0")
        if self.chamber_count < 3:
            raise InvalidInputError("chamber_count must be >= 3")


class Pose(NamedTuple):
    rotation: np.ndarray
    translation: np.ndarray

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


@dataclass(frozen=True)
class DampedPinvConfig:
    epsilon: float = 0.05
    lambda_max: float = 0.1

    def __post_init__(self):
        if not (self.epsilon > 0 and self.lambda_max > 0):
            raise InvalidInputError("epsilon and lambda_max must be > 0")


class PositionJacobians(NamedTuple):
    tip: np.ndarray  # (3, 2n)
    com: np.ndarray  # (n, 3, 2n)


def as_flat(q) -> np.ndarray:
    if isinstance(q, ArmConfiguration):
        return q.flat()
    if isinstance(q, SegmentConfig):
        return np.array([q.phi, q.theta])
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size % 2:
        raise InvalidInputError(f"expected flat configuration of even length, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("non-finite configuration")
    return q


def lengths_of(geom) -> np.ndarray:
    geom = getattr(geom, "geometry", geom)
    return np.array([g.length for g in geom], dtype=float)


def _checked(geom, q):
    L = lengths_of(geom)
    q = as_flat(q)
    if q.size != 2 * L.size:
        raise InvalidInputError(f"{L.size} segments but configuration has {q.size // 2}")
    return L, q


def segment_transform(cfg: SegmentConfig, length: float) -> Pose:
    phi, theta = float(cfg.phi), float(cfg.theta)
    if not (np.isfinite(phi) and np.isfinite(theta) and np.isfinite(length)):
        raise InvalidInputError("non-finite input to segment_transform")
    if not length > 0:
        raise InvalidInputError("segment length must be > 0")
    return Pose(_core.segment_rotation(phi, theta), _core.segment_translation(phi, theta, float(length)))


def forward_kinematics(geom: Sequence[SegmentGeometry], q) -> list[Pose]:
    """Frames {S_1}..{S_n} expressed in the base frame; the last origin is the tip."""
    L, q = _checked(geom, q)
    Rc, oc = _core.chain(q, L)
    return [Pose(Rc[i], oc[i]) for i in range(1, L.size + 1)]


def segment_com_local(cfg: SegmentConfig, length: float) -> np.ndarray:
    """Centre of mass of one segment, taken at the midpoint of its base-to-tip chord."""
    return 0.5 * segment_transform(cfg, length).translation


def com_world(geom: Sequence[SegmentGeometry], q, i: int) -> np.ndarray:
    """Base-frame centre of mass of segment ``i`` (1-based)."""
    L, q = _checked(geom, q)
    if not 1 <= i <= L.size:
        raise InvalidInputError(f"segment index {i} out of range 1..{L.size}")
    return _core.body_positions(q, L)[i - 1]


def tip_position(geom, q) -> np.ndarray:
    L, q = _checked(geom, q)
    return _core.chain(q, L)[1][-1]


def position_jacobians(geom, q) -> PositionJacobians:
    L, q = _checked(geom, q)
    _, J = _core.body_jacobians(q, L)
    return PositionJacobians(tip=J[-1], com=J[:-1])


def tip_jacobian(geom, q) -> np.ndarray:
    return position_jacobians(geom, q).tip


def jacobian_time_derivative(geom, q, qd) -> np.ndarray:
    """Tip Jacobian rate, by a central difference of J along the direction of ``qd``."""
    L, q = _checked(geom, q)
    qd = np.asarray(qd, dtype=float)
    speed = np.linalg.norm(qd)
    if speed == 0.0:
        return np.zeros((3, q.size))
    h = 1e-6 * (1.0 + speed) / speed
    Jp = _core.body_jacobians(q + h * qd, L)[1][-1]
    Jm = _core.body_jacobians(q - h * qd, L)[1][-1]
    return (Jp - Jm) / (2.0 * h)


def damping_factor(sigma_min: float, cfg: DampedPinvConfig) -> float:
    """Squared damping applied for a given smallest singular value."""
    if sigma_min >= cfg.epsilon:
        return 0.0
    return (1.0 - (sigma_min / cfg.epsilon) ** 2) * cfg.lambda_max ** 2


def damped_pinv(J, cfg: DampedPinvConfig = DampedPinvConfig()) -> np.ndarray:
    """SVD pseudo-inverse with damping ramped in below ``cfg.epsilon``.

    Each singular value ``s`` maps to ``s / (s**2 + lam2)``; ``lam2`` is zero
    while the smallest singular value stays above ``epsilon`` so the result is
    then the exact Moore-Penrose inverse.
    """
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise InvalidInputError("non-finite matrix passed to damped_pinv")
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    lam2 = damping_factor(s.min() if s.size else 0.0, cfg)
    denom = s ** 2 + lam2
    inv = np.divide(s, denom, out=np.zeros_like(s), where=denom > 0)
    return (Vt.T * inv) @ U.T


def inverse_kinematics(geom, x_target, q0, cfg: DampedPinvConfig = DampedPinvConfig(),
                       tol=1e-10, max_iter=2000) -> np.ndarray:
    """Damped least-squares position IK from the initial guess ``q0``."""
    L, q = _checked(geom, q0)
    q = q.copy()
    x_target = np.asarray(x_target, dtype=float)
    for _ in range(max_iter):
        err = x_target - _core.chain(q, L)[1][-1]
        if np.linalg.norm(err) < tol:
            return q
        q = q + damped_pinv(_core.body_jacobians(q, L)[1][-1], cfg) @ err
    raise InvalidInputError(f"IK did not converge, residual {np.linalg.norm(err):.3g} m")
