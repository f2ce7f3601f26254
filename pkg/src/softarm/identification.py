"""Least-squares identification of the dynamic coefficients from logged motion.

The regressor identity ``Y(q, qd, qdd) a = A(q) p`` is split column-wise into
coefficients that are measured directly (``a_1``, typically the masses) and
the ones to estimate (``a_2``, typically stiffness and damping):

    Y_2 a_2 = A p - Y_1 a_1

Stacking every sample gives an overdetermined linear system that we solve
with a column-pivoted QR factorization.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.signal

from . import _core
from .dynamics import ArmModel, coefficient_names
from .errors import InvalidInputError, RankDeficientError

# Columns whose pivot falls below this fraction of the largest pivot (after
# normalising every column to unit length) count as numerically dependent.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class SampleBatch:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    qd: Optional[np.ndarray] = None
    qdd: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if t.ndim != 1 or q.shape[0] != t.size or p.shape[0] != t.size:
            raise InvalidInputError("t, q and p must have one row per sample")
        if q.shape[1] % 2 or p.shape[1] != 3 * (q.shape[1] // 2):
            raise InvalidInputError("q needs 2n columns and p 3n columns")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("sample times must be strictly increasing")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InvalidInputError("non-finite samples")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[1] // 2

    def __len__(self):
        return self.t.size

    @classmethod
    def from_log(cls, log) -> "SampleBatch":
        return cls(log.t, log.group("q"), log.group("p"))


@dataclass(frozen=True)
class CoefficientSplit:
    """Partition of the coefficient basis into measured (known) and estimated (unknown) parts."""

    known_indices: tuple
    known_values: tuple
    unknown_indices: tuple
    size: int
    names: tuple = field(default=())

    def __post_init__(self):
        known = tuple(int(i) for i in self.known_indices)
        unknown = tuple(int(i) for i in self.unknown_indices)
        object.__setattr__(self, "known_indices", known)
        object.__setattr__(self, "unknown_indices", unknown)
        object.__setattr__(self, "known_values", tuple(float(v) for v in self.known_values))
        if len(self.known_values) != len(known):
            raise InvalidInputError("one known value per known index is required")
        if set(known) & set(unknown):
            raise InvalidInputError("known and unknown coefficient sets overlap")
        if sorted(known + unknown) != list(range(self.size)):
            raise InvalidInputError("known and unknown sets must cover the whole basis exactly once")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"a_{i}" for i in range(self.size)))

    @classmethod
    def from_known(cls, n: int, known: Mapping[str, float]) -> "CoefficientSplit":
        """Build a split from ``{name: value}`` of the measured coefficients."""
        names = coefficient_names(n)
        unknown_names = set(known) - set(names)
        if unknown_names:
            raise InvalidInputError(f"unknown coefficient names: {sorted(unknown_names)}")
        known_idx = [i for i, k in enumerate(names) if k in known]
        return cls(tuple(known_idx), tuple(known[names[i]] for i in known_idx),
                   tuple(i for i in range(len(names)) if names[i] not in known), len(names), names)

    @classmethod
    def masses_known(cls, model: ArmModel) -> "CoefficientSplit":
        """Masses (segments and tip) measured; stiffness and damping to be estimated."""
        n = model.n
        a = model.coefficients
        names = coefficient_names(n)
        known = {names[i]: a[i] for i in range(n)}
        known["m_tip"] = a[-1]
        return cls.from_known(n, known)

    @property
    def unknown_names(self) -> tuple:
        return tuple(self.names[i] for i in self.unknown_indices)


def _second_derivative_weights(x, x0):
    """Lagrange weights for f''(x0) from samples at ``x`` (exact for polynomials of degree < len(x))."""
    x = np.asarray(x, dtype=float) - x0
    k = x.size
    V = np.vander(x, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[2] = 2.0
    return np.linalg.solve(V, rhs)


def differentiate_samples(batch: SampleBatch, cutoff: Optional[float] = None,
                          filter_order: int = 4) -> SampleBatch:
    """Return a copy of ``batch`` with ``qd`` and ``qdd`` filled in.

    Velocities use second-order central differences inside and second-order
    one-sided formulas at both ends (``numpy.gradient``).  Accelerations use
    the three-point second difference inside and a four-point one-sided
    stencil at the ends.  Both are exact on quadratics.  With ``cutoff`` (Hz)
    the positions are first smoothed with a zero-phase Butterworth filter.
    """
    t, q = batch.t, batch.q
    N = t.size
    if N < 5:
        raise InvalidInputError("at least 5 samples are needed for differentiation")
    if cutoff is not None:
        fs = 1.0 / float(np.mean(np.diff(t)))
        if not 0 < cutoff < fs / 2:
            raise InvalidInputError(f"cutoff must lie in (0, {fs / 2:g}) Hz")
        sos = scipy.signal.butter(filter_order, cutoff, fs=fs, output="sos")
        q = scipy.signal.sosfiltfilt(sos, q, axis=0)

    qd = np.gradient(q, t, axis=0, edge_order=2)

    qdd = np.empty_like(q)
    h1 = np.diff(t)[:-1][:, None]
    h2 = np.diff(t)[1:][:, None]
    qdd[1:-1] = 2.0 * ((q[2:] - q[1:-1]) / h2 - (q[1:-1] - q[:-2]) / h1) / (h1 + h2)
    qdd[0] = _second_derivative_weights(t[:4], t[0]) @ q[:4]
    qdd[-1] = _second_derivative_weights(t[-4:], t[-1]) @ q[-4:]
    return SampleBatch(batch.t, q, batch.p, qd, qdd)


def center_held_pressures(batch: SampleBatch) -> SampleBatch:
    """Replace each pressure sample by the mean of it and its predecessor.

    Logged pressures are held constant over ``[t_k, t_k+1)``.  The central
    second difference at ``t_k`` averages the motion over both neighbouring
    intervals, so the force it sees is the mean of the two held values.
    Without this alignment the damping estimates pick up a bias of a few
    percent at 100 Hz.
    """
    p = batch.p.copy()
    p[1:] = 0.5 * (batch.p[1:] + batch.p[:-1])
    return SampleBatch(batch.t, batch.q, p, batch.qd, batch.qdd)


def build_stacked_system(batch: SampleBatch, split: CoefficientSplit, model: ArmModel):
    """Stack ``Y_2`` and ``A p - Y_1 a_1`` over all samples, sample-major (2n rows each)."""
    if batch.qd is None or batch.qdd is None:
        raise InvalidInputError("differentiate the batch before building the system")
    n = batch.n
    if n != model.n or split.size != 3 * n + 1:
        raise InvalidInputError("batch, split and model describe different segment counts")
    dof = 2 * n
    L, g = model.lengths, float(model.params.gravity)
    known = np.array(split.known_indices, dtype=int)
    unknown = np.array(split.unknown_indices, dtype=int)
    a1 = np.array(split.known_values)
    Y2 = np.empty((len(batch) * dof, unknown.size))
    rhs = np.empty(len(batch) * dof)
    for k in range(len(batch)):
        q, qd, qdd = batch.q[k], batch.qd[k], batch.qdd[k]
        Y = _core.regressor(q, qd, qd, qdd, L, g)
        force = _core.actuator_map(q, model.chamber_area, model.chamber_offset) @ batch.p[k]
        rows = slice(k * dof, (k + 1) * dof)
        Y2[rows] = Y[:, unknown]
        rhs[rows] = force - Y[:, known] @ a1
    return Y2, rhs


def solve_lsq(Y2, rhs, names: Optional[Sequence[str]] = None):
    """Least-squares ``a_2`` via column-pivoted QR on unit-normalised columns.

    Returns ``(a_2, diagnostics)`` with ``residual_norm``, ``condition_number``
    and ``rank``.  Raises ``RankDeficientError`` listing the columns that the
    pivoting pushed past the numerical rank.
    """
    Y2 = np.asarray(Y2, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if Y2.ndim != 2 or Y2.shape[1] < 1:
        raise InvalidInputError("the system has no unknown columns")
    if rhs.shape != (Y2.shape[0],):
        raise InvalidInputError("rhs length does not match the number of rows")
    names = list(names) if names is not None else [f"a_{i}" for i in range(Y2.shape[1])]
    scale = np.linalg.norm(Y2, axis=0)
    scale[scale == 0] = 1.0
    Ys = Y2 / scale
    Q, R, piv = scipy.linalg.qr(Ys, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < Y2.shape[1]:
        bad = [names[i] for i in piv[rank:]]
        raise RankDeficientError(
            f"numerical rank {rank} < {Y2.shape[1]} unknowns; unidentifiable: {', '.join(bad)}", bad)
    z = scipy.linalg.solve_triangular(R, Q.T @ rhs)
    a2 = np.empty_like(z)
    a2[piv] = z
    a2 /= scale
    sv = np.linalg.svd(Y2, compute_uv=False)
    return a2, {
        "residual_norm": float(np.linalg.norm(Y2 @ a2 - rhs)),
        "condition_number": float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf"),
        "rank": rank,
    }


@dataclass
class IdentificationReport:
    coefficients: dict
    residual: float
    condition_number: Optional[float]
    sample_count: int

    def to_json(self, path=None) -> str:
        text = json.dumps({"coefficients": self.coefficients, "residual": self.residual,
                           "condition_number": self.condition_number,
                           "sample_count": self.sample_count}, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def identify(batch: SampleBatch, model: ArmModel, split: Optional[CoefficientSplit] = None,
             cutoff: Optional[float] = None, held_pressures: bool = True) -> IdentificationReport:
    """Differentiate, stack and solve.  ``model`` supplies geometry, gravity and chamber layout.

    ``held_pressures`` says the log comes from a zero-order-hold loop (every
    simulator log does); see ``center_held_pressures``.  When every
    coefficient is known the report carries only the residual of the model
    on the data.
    """
    split = split or CoefficientSplit.masses_known(model)
    diff = differentiate_samples(batch, cutoff)
    if held_pressures:
        diff = center_held_pressures(diff)
    Y2, rhs = build_stacked_system(diff, split, model)
    if not split.unknown_indices:
        return IdentificationReport({}, float(np.linalg.norm(rhs)), None, len(batch))
    a2, diag = solve_lsq(Y2, rhs, split.unknown_names)
    return IdentificationReport(dict(zip(split.unknown_names, map(float, a2))),
                                diag["residual_norm"], diag["condition_number"], len(batch))
