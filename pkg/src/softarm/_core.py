"""JIT-compiled kernels shared by the kinematics, dynamics and simulator modules.

Everything here works on flat float arrays so it can be called from numba
code as well as from the public numpy wrappers.  Bodies are indexed
``0 .. n-1`` for the segment centres of mass and ``n`` for the tip point mass.
"""
import numpy as np
from numba import njit

THETA_SWITCH = 1e-4
_THETA_SWITCH_DERIV = 1e-2
FD_REL_STEP = 1e-6


@njit(cache=True, inline="always")
def _mv(A, x):
    out = np.empty(3)
    for r in range(3):
        out[r] = A[r, 0] * x[0] + A[r, 1] * x[1] + A[r, 2] * x[2]
    return out


@njit(cache=True, inline="always")
def _mtv(A, x):
    out = np.empty(3)
    for r in range(3):
        out[r] = A[0, r] * x[0] + A[1, r] * x[1] + A[2, r] * x[2]
    return out


@njit(cache=True, inline="always")
def _mm(A, B):
    out = np.empty((3, 3))
    for r in range(3):
        for c in range(3):
            out[r, c] = A[r, 0] * B[0, c] + A[r, 1] * B[1, c] + A[r, 2] * B[2, c]
    return out


@njit(cache=True)
def _gram(Jb):
    dof = Jb.shape[1]
    out = np.empty((dof, dof))
    for i in range(dof):
        for j in range(i, dof):
            v = Jb[0, i] * Jb[0, j] + Jb[1, i] * Jb[1, j] + Jb[2, i] * Jb[2, j]
            out[i, j] = v
            out[j, i] = v
    return out


@njit(cache=True)
def _matvec(A, x):
    m, k = A.shape
    out = np.zeros(m)
    for i in range(m):
        acc = 0.0
        for j in range(k):
            acc += A[i, j] * x[j]
        out[i] = acc
    return out


@njit(cache=True)
def arc_functions(theta):
    """Return ``f = (cos θ - 1)/θ``, ``g = sin θ/θ`` and their θ-derivatives."""
    th2 = theta * theta
    if abs(theta) < THETA_SWITCH:
        f = -theta / 2.0 + theta * th2 / 24.0
        g = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
    else:
        sh = np.sin(0.5 * theta)
        f = -2.0 * sh * sh / theta
        g = np.sin(theta) / theta
    if abs(theta) < _THETA_SWITCH_DERIV:
        th4 = th2 * th2
        df = -0.5 + th2 / 8.0 - th4 / 144.0 + th4 * th2 / 5760.0
        dg = -theta / 3.0 + theta * th2 / 30.0 - theta * th4 / 840.0 + theta * th4 * th2 / 45360.0
    else:
        sh = np.sin(0.5 * theta)
        df = (2.0 * sh * sh - theta * np.sin(theta)) / th2
        dg = (theta * np.cos(theta) - np.sin(theta)) / th2
    return f, g, df, dg


@njit(cache=True)
def segment_rotation(phi, theta):
    cp = np.cos(phi)
    sp = np.sin(phi)
    ct = np.cos(theta)
    st = np.sin(theta)
    R = np.empty((3, 3))
    R[0, 0] = cp * cp * (ct - 1.0) + 1.0
    R[0, 1] = sp * cp * (ct - 1.0)
    R[0, 2] = -cp * st
    R[1, 0] = sp * cp * (ct - 1.0)
    R[1, 1] = cp * cp * (1.0 - ct) + ct
    R[1, 2] = -sp * st
    R[2, 0] = cp * st
    R[2, 1] = sp * st
    R[2, 2] = ct
    return R


@njit(cache=True)
def segment_translation(phi, theta, length):
    f, g, _, _ = arc_functions(theta)
    t = np.empty(3)
    t[0] = length * np.cos(phi) * f
    t[1] = length * np.sin(phi) * f
    t[2] = length * g
    return t


@njit(cache=True)
def segment_derivatives(phi, theta, length):
    """Partial derivatives of the segment rotation and translation.

    Returns ``(dR_dphi, dR_dtheta, dt_dphi, dt_dtheta)``.
    """
    cp = np.cos(phi)
    sp = np.sin(phi)
    ct = np.cos(theta)
    st = np.sin(theta)
    c2 = cp * cp - sp * sp
    sc = sp * cp

    dRp = np.empty((3, 3))
    dRp[0, 0] = -2.0 * sc * (ct - 1.0)
    dRp[0, 1] = c2 * (ct - 1.0)
    dRp[0, 2] = sp * st
    dRp[1, 0] = c2 * (ct - 1.0)
    dRp[1, 1] = 2.0 * sc * (ct - 1.0)
    dRp[1, 2] = -cp * st
    dRp[2, 0] = -sp * st
    dRp[2, 1] = cp * st
    dRp[2, 2] = 0.0

    dRt = np.empty((3, 3))
    dRt[0, 0] = -cp * cp * st
    dRt[0, 1] = -sc * st
    dRt[0, 2] = -cp * ct
    dRt[1, 0] = -sc * st
    dRt[1, 1] = -sp * sp * st
    dRt[1, 2] = -sp * ct
    dRt[2, 0] = cp * ct
    dRt[2, 1] = sp * ct
    dRt[2, 2] = -st

    f, g, df, dg = arc_functions(theta)
    dtp = np.empty(3)
    dtp[0] = -length * sp * f
    dtp[1] = length * cp * f
    dtp[2] = 0.0
    dtt = np.empty(3)
    dtt[0] = length * cp * df
    dtt[1] = length * sp * df
    dtt[2] = length * dg
    return dRp, dRt, dtp, dtt


@njit(cache=True)
def _segment_into(phi, theta, length, R, t):
    """Fill ``R`` and ``t`` with the segment rotation and translation."""
    cp = np.cos(phi)
    sp = np.sin(phi)
    ct = np.cos(theta)
    st = np.sin(theta)
    R[0, 0] = cp * cp * (ct - 1.0) + 1.0
    R[0, 1] = sp * cp * (ct - 1.0)
    R[0, 2] = -cp * st
    R[1, 0] = sp * cp * (ct - 1.0)
    R[1, 1] = cp * cp * (1.0 - ct) + ct
    R[1, 2] = -sp * st
    R[2, 0] = cp * st
    R[2, 1] = sp * st
    R[2, 2] = ct
    f, g, _, _ = arc_functions(theta)
    t[0] = length * cp * f
    t[1] = length * sp * f
    t[2] = length * g


@njit(cache=True)
def _chain_into(q, lengths, Rc, oc, tl):
    """Cumulative rotations/origins of frames 0..n; ``tl`` receives each local translation."""
    n = lengths.shape[0]
    R = np.empty((3, 3))
    for r in range(3):
        oc[0, r] = 0.0
        for c in range(3):
            Rc[0, r, c] = 1.0 if r == c else 0.0
    for i in range(n):
        _segment_into(q[2 * i], q[2 * i + 1], lengths[i], R, tl[i])
        for r in range(3):
            acc = oc[i, r]
            for c in range(3):
                Rc[i + 1, r, c] = Rc[i, r, 0] * R[0, c] + Rc[i, r, 1] * R[1, c] + Rc[i, r, 2] * R[2, c]
                acc += Rc[i, r, c] * tl[i, c]
            oc[i + 1, r] = acc


@njit(cache=True)
def chain(q, lengths):
    """Cumulative base-frame rotations ``Rc[k]`` and origins ``oc[k]`` of frames 0..n."""
    n = lengths.shape[0]
    Rc = np.empty((n + 1, 3, 3))
    oc = np.empty((n + 1, 3))
    tl = np.empty((n, 3))
    _chain_into(q, lengths, Rc, oc, tl)
    return Rc, oc


@njit(cache=True)
def body_positions(q, lengths):
    n = lengths.shape[0]
    Rc, oc = chain(q, lengths)
    pos = np.empty((n + 1, 3))
    for i in range(n):
        t = segment_translation(q[2 * i], q[2 * i + 1], lengths[i])
        pos[i] = oc[i] + _mv(Rc[i], 0.5 * t)
    pos[n] = oc[n]
    return pos


@njit(cache=True)
def _jacobians_into(q, lengths, Rc, oc, tl, D, pos, J):
    """Body positions and Jacobians written into preallocated buffers.

    ``D[k]`` is scratch of shape (2, 4, 3) holding, for segment k, the
    columns of dR/dphi, dR/dtheta (rows 0..2, transposed) and dt (row 3).
    """
    n = lengths.shape[0]
    _chain_into(q, lengths, Rc, oc, tl)
    for k in range(n):
        dRp, dRt, dtp, dtt = segment_derivatives(q[2 * k], q[2 * k + 1], lengths[k])
        for r in range(3):
            for c in range(3):
                D[k, 0, r, c] = dRp[r, c]
                D[k, 1, r, c] = dRt[r, c]
            D[k, 0, 3, r] = dtp[r]
            D[k, 1, 3, r] = dtt[r]
    J[:] = 0.0
    x = np.empty(3)
    w = np.empty(3)
    v = np.empty(3)
    for b in range(n + 1):
        if b < n:
            for r in range(3):
                x[r] = oc[b, r] + 0.5 * (Rc[b, r, 0] * tl[b, 0] + Rc[b, r, 1] * tl[b, 1]
                                         + Rc[b, r, 2] * tl[b, 2])
            for s in range(2):
                for r in range(3):
                    J[b, r, 2 * b + s] = 0.5 * (Rc[b, r, 0] * D[b, s, 3, 0] + Rc[b, r, 1] * D[b, s, 3, 1]
                                                + Rc[b, r, 2] * D[b, s, 3, 2])
            upto = b
        else:
            for r in range(3):
                x[r] = oc[n, r]
            upto = n
        for r in range(3):
            pos[b, r] = x[r]
        for k in range(upto):
            # the point, expressed in frame k+1, is fixed w.r.t. segment k's coordinates
            for r in range(3):
                w[r] = (Rc[k + 1, 0, r] * (x[0] - oc[k + 1, 0]) + Rc[k + 1, 1, r] * (x[1] - oc[k + 1, 1])
                        + Rc[k + 1, 2, r] * (x[2] - oc[k + 1, 2]))
            for s in range(2):
                for r in range(3):
                    v[r] = D[k, s, 3, r] + D[k, s, r, 0] * w[0] + D[k, s, r, 1] * w[1] + D[k, s, r, 2] * w[2]
                for r in range(3):
                    J[b, r, 2 * k + s] = Rc[k, r, 0] * v[0] + Rc[k, r, 1] * v[1] + Rc[k, r, 2] * v[2]


@njit(cache=True)
def _workspace(n):
    return (np.empty((n + 1, 3, 3)), np.empty((n + 1, 3)), np.empty((n, 3)),
            np.empty((n, 2, 4, 3)))


@njit(cache=True)
def body_jacobians(q, lengths):
    """World positions and position Jacobians of every body.

    Returns ``pos`` with shape ``(n+1, 3)`` and ``J`` with shape ``(n+1, 3, 2n)``.
    """
    n = lengths.shape[0]
    Rc, oc, tl, D = _workspace(n)
    pos = np.empty((n + 1, 3))
    J = np.empty((n + 1, 3, 2 * n))
    _jacobians_into(q, lengths, Rc, oc, tl, D, pos, J)
    return pos, J


@njit(cache=True)
def body_inertias(q, lengths):
    """Unit-mass inertia contributions ``Jbᵀ Jb`` for every body."""
    _, J = body_jacobians(q, lengths)
    nb = J.shape[0]
    dof = J.shape[2]
    Mb = np.empty((nb, dof, dof))
    for b in range(nb):
        Mb[b] = _gram(J[b])
    return Mb


@njit(cache=True)
def _gram_diff(Jp, Jm, inv2h, out):
    """``out = (JpᵀJp - JmᵀJm) * inv2h`` for one body."""
    dof = Jp.shape[1]
    for i in range(dof):
        for j in range(i, dof):
            v = 0.0
            for r in range(3):
                v += Jp[r, i] * Jp[r, j] - Jm[r, i] * Jm[r, j]
            out[i, j] = v * inv2h
            out[j, i] = v * inv2h


@njit(cache=True)
def body_inertia_derivatives(q, lengths):
    """Central differences ``dMb[b, k] = ∂Mb/∂q_k`` with step ``1e-6 (1 + |q_k|)``."""
    dof = q.shape[0]
    n = lengths.shape[0]
    nb = n + 1
    dMb = np.empty((nb, dof, dof, dof))
    Rc, oc, tl, D = _workspace(n)
    pos = np.empty((nb, 3))
    Jp = np.empty((nb, 3, dof))
    Jm = np.empty((nb, 3, dof))
    qp = q.copy()
    for k in range(dof):
        h = FD_REL_STEP * (1.0 + abs(q[k]))
        qp[k] = q[k] + h
        _jacobians_into(qp, lengths, Rc, oc, tl, D, pos, Jp)
        qp[k] = q[k] - h
        _jacobians_into(qp, lengths, Rc, oc, tl, D, pos, Jm)
        qp[k] = q[k]
        inv2h = 1.0 / (2.0 * h)
        for b in range(nb):
            _gram_diff(Jp[b], Jm[b], inv2h, dMb[b, k])
    return dMb


@njit(cache=True)
def christoffel_matrix(dM, qd):
    """Coriolis matrix from ``dM[k] = ∂M/∂q_k`` via the Christoffel symbols."""
    dof = qd.shape[0]
    C = np.zeros((dof, dof))
    for i in range(dof):
        for j in range(dof):
            acc = 0.0
            for k in range(dof):
                acc += (dM[k, i, j] + dM[j, i, k] - dM[i, j, k]) * qd[k]
            C[i, j] = 0.5 * acc
    return C


@njit(cache=True)
def regressor(q, qd, qd_r, qdd_r, lengths, gravity):
    """Regressor ``Y`` with columns ordered (m_1..m_n, k_s1..k_sn, k_d1..k_dn, m_tip)."""
    n = lengths.shape[0]
    dof = 2 * n
    _, J = body_jacobians(q, lengths)
    dMb = body_inertia_derivatives(q, lengths)
    Y = np.zeros((dof, 3 * n + 1))
    for b in range(n + 1):
        col = b if b < n else 3 * n
        Mb = _gram(J[b])
        Cb = christoffel_matrix(dMb[b], qd)
        Y[:, col] = _matvec(Mb, qdd_r) + _matvec(Cb, qd_r) + gravity * J[b, 2, :]
    for i in range(n):
        th = q[2 * i + 1]
        Y[2 * i + 1, n + i] = th
        Y[2 * i, 2 * n + i] = th * th * qd[2 * i]
        Y[2 * i + 1, 2 * n + i] = qd[2 * i + 1]
    return Y


@njit(cache=True)
def inertia_from_coefficients(Mb, coeffs, n):
    M = coeffs[3 * n] * Mb[n]
    for i in range(n):
        M = M + coeffs[i] * Mb[i]
    return M


@njit(cache=True)
def actuator_map(q, area, offset):
    """Generalized forces per unit chamber pressure, block diagonal over segments."""
    n = area.shape[0]
    A = np.zeros((2 * n, 3 * n))
    for i in range(n):
        phi = q[2 * i]
        th = q[2 * i + 1]
        k = area[i] * offset[i]
        for j in range(3):
            psi = 2.0 * np.pi * j / 3.0
            A[2 * i, 3 * i + j] = k * th * np.sin(psi - phi)
            A[2 * i + 1, 3 * i + j] = k * np.cos(psi - phi)
    return A


@njit(cache=True)
def _cholesky(M):
    """Lower Cholesky factor of a small SPD matrix plus its smallest and largest squared pivots.

    A non-positive pivot returns ``ok = False``.
    """
    dof = M.shape[0]
    L = np.zeros((dof, dof))
    dmin2 = np.inf
    dmax2 = 0.0
    for j in range(dof):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return L, 0.0, 0.0, False
        d = np.sqrt(s)
        L[j, j] = d
        dmin2 = min(dmin2, s)
        dmax2 = max(dmax2, s)
        for i in range(j + 1, dof):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / d
    return L, dmin2, dmax2, True


@njit(cache=True)
def _cholesky_apply(L, rhs):
    dof = L.shape[0]
    y = np.empty(dof)
    for i in range(dof):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(dof)
    for i in range(dof - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, dof):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def _regularized_solve(M, rhs):
    """Solve ``M x = rhs`` through ``M + mu I`` with ``mu = 1e-10 tr(M) / dof``.

    One refinement step removes the ``mu x`` bias wherever ``M`` is well
    conditioned; near singular poses the correction is bounded by ``|x|``.
    Returns ``(x, cond)`` where ``cond`` estimates the condition number of
    the unregularised ``M`` from the extreme Cholesky pivots (``inf`` when
    the smallest pivot is no larger than ``mu``).
    """
    dof = M.shape[0]
    mu = 1e-10 * np.trace(M) / dof
    Mr = M.copy()
    for i in range(dof):
        Mr[i, i] += mu
    L, dmin2, dmax2, ok = _cholesky(Mr)
    if not ok:
        return np.full(dof, np.nan), np.inf
    x = _cholesky_apply(L, rhs)
    x = x + _cholesky_apply(L, mu * x)
    cond = dmax2 / (dmin2 - mu) if dmin2 > mu * (1.0 + 1e-6) else np.inf
    return x, cond


@njit(cache=True)
def forward_dynamics(q, qd, p, d, lengths, area, offset, coeffs, gravity, max_cond):
    """Joint accelerations and a condition estimate of the regularised inertia.

    Returns NaNs when the state is non-finite or the estimate exceeds ``max_cond``.
    """
    n = lengths.shape[0]
    dof = 2 * n
    if not (np.isfinite(q).all() and np.isfinite(qd).all()):
        return np.full(dof, np.nan), np.inf
    _, J = body_jacobians(q, lengths)
    dMb = body_inertia_derivatives(q, lengths)
    M = np.zeros((dof, dof))
    dM = np.zeros((dof, dof, dof))
    rhs = _matvec(actuator_map(q, area, offset), p) + d
    for b in range(n + 1):
        a = coeffs[b] if b < n else coeffs[3 * n]
        M += a * _gram(J[b])
        dM += a * dMb[b]
        for i in range(dof):
            rhs[i] -= a * gravity * J[b, 2, i]
    # Coriolis/centrifugal force C(q, qd) qd from the Christoffel symbols
    for i in range(dof):
        acc = 0.0
        for j in range(dof):
            for k in range(dof):
                acc += (dM[k, i, j] - 0.5 * dM[i, j, k]) * qd[j] * qd[k]
        rhs[i] -= acc
    for i in range(n):
        th = q[2 * i + 1]
        rhs[2 * i + 1] -= coeffs[n + i] * th + coeffs[2 * n + i] * qd[2 * i + 1]
        rhs[2 * i] -= coeffs[2 * n + i] * th * th * qd[2 * i]
    if not (np.isfinite(M).all() and np.isfinite(rhs).all()):
        return np.full(dof, np.nan), np.inf
    qdd, cond = _regularized_solve(M, rhs)
    if not cond <= max_cond:
        return np.full(dof, np.nan), cond
    return qdd, cond


@njit(cache=True)
def rk4_steps(q, qd, p, d, lengths, area, offset, coeffs, gravity, dt, nsteps, max_cond):
    """Fixed-step RK4 with inputs held constant. Returns ``(q, qd, ok, cond)``."""
    q = q.copy()
    qd = qd.copy()
    cond = 0.0
    for _ in range(nsteps):
        a1, c1 = forward_dynamics(q, qd, p, d, lengths, area, offset, coeffs, gravity, max_cond)
        a2, c2 = forward_dynamics(q + 0.5 * dt * qd, qd + 0.5 * dt * a1, p, d,
                                  lengths, area, offset, coeffs, gravity, max_cond)
        a3, c3 = forward_dynamics(q + 0.5 * dt * (qd + 0.5 * dt * a1), qd + 0.5 * dt * a2, p, d,
                                  lengths, area, offset, coeffs, gravity, max_cond)
        a4, c4 = forward_dynamics(q + dt * (qd + 0.5 * dt * a2), qd + dt * a3, p, d,
                                  lengths, area, offset, coeffs, gravity, max_cond)
        cond = max(max(c1, c2), max(c3, c4))
        if not np.isfinite(a1).all() or not np.isfinite(a2).all() \
                or not np.isfinite(a3).all() or not np.isfinite(a4).all():
            return q, qd, False, cond
        q = q + dt * (qd + dt / 6.0 * (a1 + a2 + a3))
        qd = qd + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return q, qd, True, cond


@njit(cache=True)
def total_energy(q, qd, lengths, stiffness, coeffs, gravity):
    n = lengths.shape[0]
    Mb = body_inertias(q, lengths)
    M = inertia_from_coefficients(Mb, coeffs, n)
    kinetic = 0.5 * np.dot(qd, _matvec(M, qd))
    pos = body_positions(q, lengths)
    potential = 0.0
    for i in range(n):
        th = q[2 * i + 1]
        potential += 0.5 * stiffness[i] * th * th + coeffs[i] * gravity * pos[i, 2]
    potential += coeffs[3 * n] * gravity * pos[n, 2]
    return kinetic + potential
