"""Compiled rigid-body model shared by kinematics, dynamics and impact.

All vectors are Platform Fixed components.  Generalized coordinates are
``q = (theta_1, theta_2, phi, psi, x, y)``; ``(x, y)`` locate the stance hip
joint and the height follows from the active holonomic constraint.

Contact codes: 0 = A inner edge, 1 = B inner edge, 2 = A curved surface,
3 = B curved surface.
"""

import numpy as np
from numba import njit

from .params import (
    P_BETA, P_CF1, P_CR1, P_CR2, P_G, P_H, P_HB, P_HG, P_I1, P_I2, P_I3,
    P_KM, P_L, P_LG, P_MA, P_MB, P_MC,
)

A_EDGE, B_EDGE, A_CURVE, B_CURVE = 0, 1, 2, 3

_CACHE = True


@njit(cache=_CACHE)
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=_CACHE)
def side_sign(contact):
    """+1 when the stance joint belongs to Leg-A, -1 for Leg-B."""
    return 1.0 if contact == A_EDGE or contact == A_CURVE else -1.0


@njit(cache=_CACHE)
def is_edge(contact):
    return contact == A_EDGE or contact == B_EDGE


@njit(cache=_CACHE)
def height(phi, contact, p):
    """Stance hip height and its first two derivatives in phi."""
    s, c = np.sin(phi), np.cos(phi)
    if contact == A_EDGE or contact == B_EDGE:
        h = p[P_H]
        return h * c, -h * s, -h * c
    sign = -1.0 if contact == A_CURVE else 1.0
    return p[P_HB] + sign * p[P_L] * s, sign * p[P_L] * c, -sign * p[P_L] * s


@njit(cache=_CACHE)
def frames(q):
    """Rotation matrices R1..R4 whose rows are the frame unit vectors."""
    th1, th2, phi, psi = q[0], q[1], q[2], q[3]
    cps, sps = np.cos(psi), np.sin(psi)
    cph, sph = np.cos(phi), np.sin(phi)
    R1 = np.zeros((3, 3))
    R1[0, 0], R1[0, 1] = cps, sps
    R1[1, 0], R1[1, 1] = -sps, cps
    R1[2, 2] = 1.0
    R2 = np.zeros((3, 3))
    R2[0] = R1[0]
    R2[1] = cph * R1[1] + sph * R1[2]
    R2[2] = -sph * R1[1] + cph * R1[2]
    R3 = np.zeros((3, 3))
    R4 = np.zeros((3, 3))
    c1, s1 = np.cos(th1), np.sin(th1)
    c2, s2 = np.cos(th2), np.sin(th2)
    R3[0] = c1 * R2[0] - s1 * R2[2]
    R3[1] = R2[1]
    R3[2] = s1 * R2[0] + c1 * R2[2]
    R4[0] = c2 * R2[0] - s2 * R2[2]
    R4[1] = R2[1]
    R4[2] = s2 * R2[0] + c2 * R2[2]
    return R1, R2, R3, R4


@njit(cache=_CACHE)
def positions(q, contact, p):
    """Rows: r_A (stance joint), r_D, r_GA, r_GB, r_GD."""
    R1, R2, R3, R4 = frames(q)
    z, _, _ = height(q[2], contact, p)
    out = np.zeros((5, 3))
    out[0, 0], out[0, 1], out[0, 2] = q[4], q[5], z
    out[1] = out[0] + side_sign(contact) * p[P_L] * R2[1]
    out[2] = out[1] - p[P_LG] * R2[1] - p[P_HG] * R3[2]
    out[3] = out[1] + p[P_LG] * R2[1] - p[P_HG] * R4[2]
    out[4] = out[1]
    return out


@njit(cache=_CACHE)
def world_inertia(R, p, offset):
    inertia = p[offset:offset + 9].copy().reshape(3, 3)
    return R.T @ inertia @ R


@njit(cache=_CACHE)
def _bodies(q, qd, contact, p, ncols, rA_cols):
    """Velocity Jacobians and bias accelerations of the three bodies.

    ``rA_cols`` is the 3 x ncols Jacobian of the stance joint velocity and
    ``ncols`` the number of generalized velocities (6 continuous, 7 impact);
    the first four generalized velocities are always the angle rates.
    Returns (JG[3], aG[3], Jw[3], aw[3], w[3], R1, R2, R3, R4, j2dd_b).
    """
    R1, R2, R3, R4 = frames(q)
    i1, j1, k = R1[0], R1[1], R1[2]
    j2 = R2[1]
    k3, k4 = R3[2], R4[2]
    t1d, t2d, phd, psd = qd[0], qd[1], qd[2], qd[3]

    Jw3 = np.zeros((3, ncols))
    Jw3[:, 2] = i1
    Jw3[:, 3] = k
    Jw1 = Jw3.copy()
    Jw1[:, 0] = j2
    Jw2 = Jw3.copy()
    Jw2[:, 1] = j2

    w3 = phd * i1 + psd * k
    w1 = w3 + t1d * j2
    w2 = w3 + t2d * j2
    j2d = cross(w3, j2)
    aw3 = phd * psd * j1
    aw1 = aw3 + t1d * j2d
    aw2 = aw3 + t2d * j2d

    Jj2 = np.zeros((3, ncols))
    Jj2[:, 2] = cross(i1, j2)
    Jj2[:, 3] = cross(k, j2)
    Jk3 = np.zeros((3, ncols))
    Jk4 = np.zeros((3, ncols))
    for c in range(4):
        Jk3[:, c] = cross(Jw1[:, c], k3)
        Jk4[:, c] = cross(Jw2[:, c], k4)

    j2dd_b = cross(aw3, j2) + cross(w3, j2d)
    k3dd_b = cross(aw1, k3) + cross(w1, cross(w1, k3))
    k4dd_b = cross(aw2, k4) + cross(w2, cross(w2, k4))

    sig_l = side_sign(contact) * p[P_L]
    JD = rA_cols + sig_l * Jj2
    # stance joint bias; only the continuous coordinates need it (the impact
    # map uses the mass matrix alone)
    aA_b = np.zeros(3)
    if ncols == 6:
        _, _, zpp = height(q[2], contact, p)
        aA_b[2] = zpp * phd * phd
    aD_b = aA_b + sig_l * j2dd_b

    JGA = JD - p[P_LG] * Jj2 - p[P_HG] * Jk3
    JGB = JD + p[P_LG] * Jj2 - p[P_HG] * Jk4
    aGA = aD_b - p[P_LG] * j2dd_b - p[P_HG] * k3dd_b
    aGB = aD_b + p[P_LG] * j2dd_b - p[P_HG] * k4dd_b
    return (JGA, JGB, JD, aGA, aGB, aD_b, Jw1, Jw2, Jw3, aw1, aw2, aw3,
            w1, w2, w3, R1, R2, R3, R4, Jj2, j2dd_b)


@njit(cache=_CACHE)
def _inertial(q, qd, contact, p, ncols, rA_cols):
    """Mass matrix, velocity-product bias and gravity gradient."""
    (JGA, JGB, JD, aGA, aGB, aD, Jw1, Jw2, Jw3, aw1, aw2, aw3,
     w1, w2, w3, R1, R2, R3, R4, Jj2, j2dd_b) = _bodies(q, qd, contact, p, ncols, rA_cols)
    mA, mB, mC = p[P_MA], p[P_MB], p[P_MC]
    I1 = world_inertia(R3, p, P_I1)
    I2 = world_inertia(R4, p, P_I2)
    I3 = world_inertia(R2, p, P_I3)
    M = (mA * JGA.T @ JGA + mB * JGB.T @ JGB + mC * JD.T @ JD
         + Jw1.T @ I1 @ Jw1 + Jw2.T @ I2 @ Jw2 + Jw3.T @ I3 @ Jw3)
    h = (mA * JGA.T @ aGA + mB * JGB.T @ aGB + mC * JD.T @ aD
         + Jw1.T @ (I1 @ aw1 + cross(w1, I1 @ w1))
         + Jw2.T @ (I2 @ aw2 + cross(w2, I2 @ w2))
         + Jw3.T @ (I3 @ aw3 + cross(w3, I3 @ w3)))
    K = np.array([np.sin(p[P_BETA]), 0.0, np.cos(p[P_BETA])])
    gradV = p[P_G] * (mA * JGA.T @ K + mB * JGB.T @ K + mC * JD.T @ K)
    return M, h, gradV


@njit(cache=_CACHE)
def rA_jacobian(q, contact, p):
    """Jacobian of the stance joint velocity for the continuous coordinates."""
    _, zp, _ = height(q[2], contact, p)
    J = np.zeros((3, 6))
    J[2, 2] = zp
    J[0, 4] = 1.0
    J[1, 5] = 1.0
    return J


@njit(cache=_CACHE)
def rolling_terms(q, qd, contact, p):
    """Expected stance joint velocity from rolling contact.

    Returns (Jv, bias) with v_expected = Jv @ qd (only angle columns nonzero)
    and bias its time derivative at zero generalized acceleration.
    """
    R1, R2, R3, R4 = frames(q)
    i1, j1, k = R1[0], R1[1], R1[2]
    j2, k2 = R2[1], R2[2]
    sig = side_sign(contact)
    t1d, t2d, phd, psd = qd[0], qd[1], qd[2], qd[3]
    w3 = phd * i1 + psd * k
    st_rate = t1d if sig > 0 else t2d
    wst = w3 + st_rate * j2
    j2d = cross(w3, j2)
    aw3 = phd * psd * j1
    awst = aw3 + st_rate * j2d
    cols = np.zeros((3, 4))
    cols[:, 2] = i1
    cols[:, 3] = k
    cols[:, 0 if sig > 0 else 1] = j2
    Jv = np.zeros((3, 6))
    if is_edge(contact):
        rho = p[P_H] * k2
        rhod = p[P_H] * cross(w3, k2)
        for c in range(4):
            Jv[:, c] = cross(cols[:, c], rho)
        bias = cross(awst, rho) + cross(wst, rhod)
    else:
        rho = p[P_HB] * k
        kap = -sig * p[P_L]
        for c in range(4):
            Jv[:, c] = cross(cols[:, c], rho)
        Jv[:, 2] += kap * cross(i1, j2)
        Jv[:, 3] += kap * cross(k, j2)
        j2dd_b = cross(aw3, j2) + cross(w3, j2d)
        bias = cross(awst, rho) + kap * j2dd_b
    return Jv, bias


@njit(cache=_CACHE)
def constraint(q, qd, contact, p):
    """Rolling-constraint matrix (x, y rows) and its velocity-product term."""
    Jv, bias = rolling_terms(q, qd, contact, p)
    Jc = rA_jacobian(q, contact, p)[0:2] - Jv[0:2]
    return Jc, -bias[0:2]


@njit(cache=_CACHE)
def field_torque(q, field, p):
    """Magnetic torque vector for field = (psi_m, phi_m, p_m)."""
    R1, R2, R3, R4 = frames(q)
    psm, phm, pm = field[0], field[1], field[2]
    jm = np.array([-np.cos(phm) * np.sin(psm), np.cos(phm) * np.cos(psm), np.sin(phm)])
    return cross(p[P_KM] * R2[1], pm * jm)


@njit(cache=_CACHE)
def external_forces(q, qd, contact, field, p, eps):
    """Rolling friction, hip damping and magnetic generalized forces."""
    Q = np.zeros(6)
    sig = side_sign(contact)
    if sig > 0:
        Q[0] -= p[P_CR1] * np.tanh(qd[0] / eps)
    else:
        Q[1] -= p[P_CR1] * np.tanh(qd[1] / eps)
    Q[2] -= p[P_CR2] * np.tanh(qd[2] / eps)
    Q[3] -= p[P_CR2] * np.tanh(qd[3] / eps)
    Q[0] -= p[P_CF1] * qd[0]
    Q[1] -= p[P_CF1] * qd[1]
    if field[2] != 0.0:
        R1 = frames(q)[0]
        tau = field_torque(q, field, p)
        Q[2] += tau[0] * R1[0, 0] + tau[1] * R1[0, 1] + tau[2] * R1[0, 2]
        Q[3] += tau[2]
    return Q


@njit(cache=_CACHE)
def eom(q, qd, contact, field, p, eps):
    """(M, h, Jc, Jcdot_qd, Q) with M qdd + h = Q + Jc^T r and Jc qdd = -Jcdot_qd."""
    M, h, gradV = _inertial(q, qd, contact, p, 6, rA_jacobian(q, contact, p))
    Jc, jcd = constraint(q, qd, contact, p)
    Q = external_forces(q, qd, contact, field, p, eps)
    return M, h + gradV, Jc, jcd, Q


@njit(cache=_CACHE)
def solve_kkt(M, rhs_q, Jc, rhs_c):
    A = np.zeros((8, 8))
    A[:6, :6] = M
    A[:6, 6:] = -Jc.T
    A[6:, :6] = Jc
    b = np.zeros(8)
    b[:6] = rhs_q
    b[6:] = rhs_c
    return np.linalg.solve(A, b)


@njit(cache=_CACHE)
def planar_rates(q, qd4, contact, p):
    """Full generalized velocity with (xdot, ydot) from the rolling constraint."""
    qd = np.zeros(6)
    qd[:4] = qd4[:4]
    Jv, _ = rolling_terms(q, qd, contact, p)
    v = Jv @ qd
    qd[4] = v[0]
    qd[5] = v[1]
    return qd


@njit(cache=_CACHE)
def accelerations(q, qd, contact, field, p, eps):
    M, h, Jc, jcd, Q = eom(q, qd, contact, field, p, eps)
    return solve_kkt(M, Q - h, Jc, -jcd)


@njit(cache=_CACHE)
def kinetic_energy(q, qd, contact, p):
    M, _, _ = _inertial(q, qd, contact, p, 6, rA_jacobian(q, contact, p))
    return 0.5 * qd @ M @ qd


@njit(cache=_CACHE)
def potential_energy(q, contact, p):
    r = positions(q, contact, p)
    K = np.array([np.sin(p[P_BETA]), 0.0, np.cos(p[P_BETA])])
    return p[P_G] * (p[P_MA] * r[2] @ K + p[P_MB] * r[3] @ K + p[P_MC] * r[4] @ K)


# State vector layout used by the integrator:
#   y[0:6]  = q, y[6:10] = angle rates, y[10] = magnetic impulse integral,
#   y[11] = work done by friction, damping and field.
NY = 12


@njit(cache=_CACHE)
def rhs_kkt(y, contact, field, p, eps):
    """Reference vector field through the full 8 x 8 KKT system."""
    q = y[0:6]
    qd = planar_rates(q, y[6:10], contact, p)
    M, h, Jc, jcd, Q = eom(q, qd, contact, field, p, eps)
    sol = solve_kkt(M, Q - h, Jc, -jcd)
    dy = np.empty(NY)
    dy[0:6] = qd
    dy[6:10] = sol[0:4]
    if field[2] != 0.0:
        tau = field_torque(q, field, p)
        dy[10] = np.sqrt(tau @ tau)
    else:
        dy[10] = 0.0
    dy[11] = Q @ qd
    return dy


# -- fused vector field ----------------------------------------------------
#
# The rolling constraint fixes (xdot, ydot) as linear functions of the four
# angle rates u, so the motion can be written in u alone (Kane's method):
# every body velocity is J_u u with J_u built directly from the contact
# kinematics, and M_u = T^T M T with T the map u -> qdot.  This avoids the
# KKT solve and the repeated frame evaluations of the reference path.

@njit(cache=_CACHE, inline="always")
def _cx(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(cache=_CACHE)
def _cols_cross(J, v, out):
    """out[:, c] = J[:, c] x v."""
    for c in range(4):
        out[0, c] = J[1, c] * v[2] - J[2, c] * v[1]
        out[1, c] = J[2, c] * v[0] - J[0, c] * v[2]
        out[2, c] = J[0, c] * v[1] - J[1, c] * v[0]


@njit(cache=_CACHE)
def _add_translation(M, h, gu, J, a, m, K, g):
    for i in range(4):
        hi = 0.0
        gi = 0.0
        for r in range(3):
            hi += J[r, i] * a[r]
            gi += J[r, i] * K[r]
        h[i] += m * hi
        gu[i] += m * g * gi
        for j in range(i, 4):
            v = 0.0
            for r in range(3):
                v += J[r, i] * J[r, j]
            M[i, j] += m * v


@njit(cache=_CACHE)
def _add_rotation(M, h, Jw, w, aw, R, p, off):
    """Rigid-body rotational terms evaluated in the body frame R (rows)."""
    Jb = np.empty((3, 4))
    wb = np.empty(3)
    ab = np.empty(3)
    for r in range(3):
        for c in range(4):
            Jb[r, c] = R[r, 0] * Jw[0, c] + R[r, 1] * Jw[1, c] + R[r, 2] * Jw[2, c]
        wb[r] = R[r, 0] * w[0] + R[r, 1] * w[1] + R[r, 2] * w[2]
        ab[r] = R[r, 0] * aw[0] + R[r, 1] * aw[1] + R[r, 2] * aw[2]
    Iw = np.empty(3)
    Ia = np.empty(3)
    IJ = np.empty((3, 4))
    for r in range(3):
        Iw[r] = p[off + 3 * r] * wb[0] + p[off + 3 * r + 1] * wb[1] + p[off + 3 * r + 2] * wb[2]
        Ia[r] = p[off + 3 * r] * ab[0] + p[off + 3 * r + 1] * ab[1] + p[off + 3 * r + 2] * ab[2]
        for c in range(4):
            IJ[r, c] = (p[off + 3 * r] * Jb[0, c] + p[off + 3 * r + 1] * Jb[1, c]
                        + p[off + 3 * r + 2] * Jb[2, c])
    g0, g1, g2 = _cx(wb[0], wb[1], wb[2], Iw[0], Iw[1], Iw[2])
    t0, t1, t2 = Ia[0] + g0, Ia[1] + g1, Ia[2] + g2
    for i in range(4):
        h[i] += Jb[0, i] * t0 + Jb[1, i] * t1 + Jb[2, i] * t2
        for j in range(i, 4):
            M[i, j] += Jb[0, i] * IJ[0, j] + Jb[1, i] * IJ[1, j] + Jb[2, i] * IJ[2, j]


@njit(cache=_CACHE)
def _solve4(M, b):
    """Solve the SPD system M x = b (upper triangle of M filled) by Cholesky."""
    Lm = np.zeros((4, 4))
    for i in range(4):
        for j in range(i + 1):
            s = M[j, i]
            for k in range(j):
                s -= Lm[i, k] * Lm[j, k]
            if i == j:
                Lm[i, i] = np.sqrt(s)
            else:
                Lm[i, j] = s / Lm[j, j]
    z = np.empty(4)
    for i in range(4):
        s = b[i]
        for k in range(i):
            s -= Lm[i, k] * z[k]
        z[i] = s / Lm[i, i]
    x = np.empty(4)
    for i in range(3, -1, -1):
        s = z[i]
        for k in range(i + 1, 4):
            s -= Lm[k, i] * x[k]
        x[i] = s / Lm[i, i]
    return x


@njit(cache=_CACHE)
def reduced_dynamics(y, contact, field, p, eps):
    """(M_u, f_u, JA, Q) with M_u udot = f_u for the angle rates u.

    ``JA`` (3 x 4) maps u to the stance joint velocity and ``Q`` holds the
    friction, damping and field generalized forces on the four angles.
    """
    th1, th2, phi, psi = y[0], y[1], y[2], y[3]
    t1d, t2d, phd, psd = y[6], y[7], y[8], y[9]
    cps, sps = np.cos(psi), np.sin(psi)
    cph, sph = np.cos(phi), np.sin(phi)
    c1, s1 = np.cos(th1), np.sin(th1)
    c2, s2 = np.cos(th2), np.sin(th2)
    i1 = np.array([cps, sps, 0.0])
    j1 = np.array([-sps, cps, 0.0])
    k = np.array([0.0, 0.0, 1.0])
    j2 = np.array([-cph * sps, cph * cps, sph])
    k2 = np.array([sph * sps, -sph * cps, cph])
    i3 = c1 * i1 - s1 * k2
    k3 = s1 * i1 + c1 * k2
    i4 = c2 * i1 - s2 * k2
    k4 = s2 * i1 + c2 * k2

    sig = 1.0 if contact == A_EDGE or contact == A_CURVE else -1.0
    st = t1d if sig > 0 else t2d

    w3 = phd * i1 + psd * k
    a0, a1, a2 = _cx(w3[0], w3[1], w3[2], j2[0], j2[1], j2[2])
    j2d = np.array([a0, a1, a2])
    aw3 = phd * psd * j1
    b0, b1, b2 = _cx(aw3[0], aw3[1], aw3[2], j2[0], j2[1], j2[2])
    d0, d1, d2 = _cx(w3[0], w3[1], w3[2], a0, a1, a2)
    j2dd = np.array([b0 + d0, b1 + d1, b2 + d2])

    Jw3 = np.zeros((3, 4))
    Jw3[:, 2] = i1
    Jw3[:, 3] = k
    Jw1 = Jw3.copy()
    Jw1[:, 0] = j2
    Jw2 = Jw3.copy()
    Jw2[:, 1] = j2
    Jj2 = np.zeros((3, 4))
    Jj2[0, 2], Jj2[1, 2], Jj2[2, 2] = _cx(i1[0], i1[1], i1[2], j2[0], j2[1], j2[2])
    Jj2[0, 3], Jj2[1, 3], Jj2[2, 3] = _cx(0.0, 0.0, 1.0, j2[0], j2[1], j2[2])

    w1 = w3 + t1d * j2
    w2 = w3 + t2d * j2
    aw1 = aw3 + t1d * j2d
    aw2 = aw3 + t2d * j2d
    wst = w3 + st * j2
    awst = aw3 + st * j2d
    Jwst = Jw1 if sig > 0 else Jw2

    # stance joint velocity Jacobian and bias acceleration from rolling
    JA = np.empty((3, 4))
    if contact == A_EDGE or contact == B_EDGE:
        rho = p[P_H] * k2
        _cols_cross(Jwst, rho, JA)
        r0, r1, r2 = _cx(w3[0], w3[1], w3[2], rho[0], rho[1], rho[2])
        e0, e1, e2 = _cx(awst[0], awst[1], awst[2], rho[0], rho[1], rho[2])
        f0, f1, f2 = _cx(wst[0], wst[1], wst[2], r0, r1, r2)
        aA = np.array([e0 + f0, e1 + f1, e2 + f2])
    else:
        rho = p[P_HB] * k
        kap = -sig * p[P_L]
        _cols_cross(Jwst, rho, JA)
        JA += kap * Jj2
        e0, e1, e2 = _cx(awst[0], awst[1], awst[2], rho[0], rho[1], rho[2])
        aA = np.array([e0, e1, e2]) + kap * j2dd

    sl = sig * p[P_L]
    JD = JA + sl * Jj2
    aD = aA + sl * j2dd
    Jk3 = np.empty((3, 4))
    Jk4 = np.empty((3, 4))
    _cols_cross(Jw1, k3, Jk3)
    _cols_cross(Jw2, k4, Jk4)
    u0, u1, u2 = _cx(w1[0], w1[1], w1[2], k3[0], k3[1], k3[2])
    v0, v1, v2 = _cx(w1[0], w1[1], w1[2], u0, u1, u2)
    x0, x1, x2 = _cx(aw1[0], aw1[1], aw1[2], k3[0], k3[1], k3[2])
    k3dd = np.array([x0 + v0, x1 + v1, x2 + v2])
    u0, u1, u2 = _cx(w2[0], w2[1], w2[2], k4[0], k4[1], k4[2])
    v0, v1, v2 = _cx(w2[0], w2[1], w2[2], u0, u1, u2)
    x0, x1, x2 = _cx(aw2[0], aw2[1], aw2[2], k4[0], k4[1], k4[2])
    k4dd = np.array([x0 + v0, x1 + v1, x2 + v2])

    LG, HG = p[P_LG], p[P_HG]
    JGA = JD - LG * Jj2 - HG * Jk3
    JGB = JD + LG * Jj2 - HG * Jk4
    aGA = aD - LG * j2dd - HG * k3dd
    aGB = aD + LG * j2dd - HG * k4dd

    M = np.zeros((4, 4))
    h = np.zeros(4)
    gu = np.zeros(4)
    K = np.array([np.sin(p[P_BETA]), 0.0, np.cos(p[P_BETA])])
    g = p[P_G]
    _add_translation(M, h, gu, JGA, aGA, p[P_MA], K, g)
    _add_translation(M, h, gu, JGB, aGB, p[P_MB], K, g)
    _add_translation(M, h, gu, JD, aD, p[P_MC], K, g)
    R = np.empty((3, 3))
    R[0], R[1], R[2] = i3, j2, k3
    _add_rotation(M, h, Jw1, w1, aw1, R, p, P_I1)
    R[0], R[2] = i4, k4
    _add_rotation(M, h, Jw2, w2, aw2, R, p, P_I2)
    R[0], R[2] = i1, k2
    _add_rotation(M, h, Jw3, w3, aw3, R, p, P_I3)

    Q = np.zeros(4)
    if sig > 0:
        Q[0] -= p[P_CR1] * np.tanh(t1d / eps)
    else:
        Q[1] -= p[P_CR1] * np.tanh(t2d / eps)
    Q[2] -= p[P_CR2] * np.tanh(phd / eps)
    Q[3] -= p[P_CR2] * np.tanh(psd / eps)
    Q[0] -= p[P_CF1] * t1d
    Q[1] -= p[P_CF1] * t2d
    if field[2] != 0.0:
        psm, phm, pm = field[0], field[1], field[2]
        km = p[P_KM] * pm
        jm0, jm1, jm2 = -np.cos(phm) * np.sin(psm), np.cos(phm) * np.cos(psm), np.sin(phm)
        tq0, tq1, tq2 = _cx(km * j2[0], km * j2[1], km * j2[2], jm0, jm1, jm2)
        Q[2] += tq0 * i1[0] + tq1 * i1[1]
        Q[3] += tq2
    return M, Q - h - gu, JA, Q


@njit(cache=_CACHE)
def rhs(y, contact, field, p, eps):
    """Integrator vector field; layout as in ``rhs_kkt``."""
    M, f, JA, Q = reduced_dynamics(y, contact, field, p, eps)
    ud = _solve4(M, f)
    dy = np.empty(NY)
    for i in range(4):
        dy[i] = y[6 + i]
        dy[6 + i] = ud[i]
    dy[4] = JA[0, 0] * y[6] + JA[0, 1] * y[7] + JA[0, 2] * y[8] + JA[0, 3] * y[9]
    dy[5] = JA[1, 0] * y[6] + JA[1, 1] * y[7] + JA[1, 2] * y[8] + JA[1, 3] * y[9]
    if field[2] != 0.0:
        psm, phm = field[0], field[1]
        km = p[P_KM] * field[2]
        cph, sph = np.cos(y[2]), np.sin(y[2])
        cps, sps = np.cos(y[3]), np.sin(y[3])
        jm0, jm1, jm2 = -np.cos(phm) * np.sin(psm), np.cos(phm) * np.cos(psm), np.sin(phm)
        tq0, tq1, tq2 = _cx(-km * cph * sps, km * cph * cps, km * sph, jm0, jm1, jm2)
        dy[10] = np.sqrt(tq0 * tq0 + tq1 * tq1 + tq2 * tq2)
    else:
        dy[10] = 0.0
    dy[11] = Q[0] * y[6] + Q[1] * y[7] + Q[2] * y[8] + Q[3] * y[9]
    return dy


# -- impact ---------------------------------------------------------------

@njit(cache=_CACHE)
def impact_matrices(q, contact, p):
    """Impact-coordinate mass matrix and striking-foot velocity Jacobian.

    Impact coordinates are (theta_1, theta_2, phi, psi, c_x, c_y, c_z) where c
    is the pre-impact stance contact point; r_A = c + H k2.
    Returns (M7, G) with G @ qd7 the velocity of the striking foot's contact
    point, and the joint-offset vector to the new stance joint.
    """
    R1, R2, R3, R4 = frames(q)
    i1, k = R1[0], R1[2]
    j2, k2 = R2[1], R2[2]
    sig = side_sign(contact)
    hk2 = p[P_H] * k2
    cols_st = np.zeros((3, 7))
    cols_new = np.zeros((3, 7))
    cols_st[:, 2] = i1
    cols_st[:, 3] = k
    cols_new[:, 2] = i1
    cols_new[:, 3] = k
    cols_st[:, 0 if sig > 0 else 1] = j2
    cols_new[:, 1 if sig > 0 else 0] = j2
    JrA = np.zeros((3, 7))
    for c in range(4):
        JrA[:, c] = cross(cols_st[:, c], hk2)
    JrA[0, 4] = 1.0
    JrA[1, 5] = 1.0
    JrA[2, 6] = 1.0
    qd0 = np.zeros(7)
    M7, _, _ = _inertial(q, qd0, contact, p, 7, JrA)
    Jj2 = np.zeros((3, 7))
    Jj2[:, 2] = cross(i1, j2)
    Jj2[:, 3] = cross(k, j2)
    G = JrA + 2.0 * sig * p[P_L] * Jj2
    for c in range(4):
        G[:, c] -= cross(cols_new[:, c], hk2)
    return M7, G, 2.0 * sig * p[P_L] * j2
