# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-sample kernels. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, asin, atan2, M_PI

cnp.import_array()

ctypedef double m33[3][3]


cdef inline void dcm_from_quat(const double* q, m33 R) noexcept nogil:
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    R[0][0] = 1.0 - 2.0 * (y * y + z * z)
    R[0][1] = 2.0 * (x * y - w * z)
    R[0][2] = 2.0 * (x * z + w * y)
    R[1][0] = 2.0 * (x * y + w * z)
    R[1][1] = 1.0 - 2.0 * (x * x + z * z)
    R[1][2] = 2.0 * (y * z - w * x)
    R[2][0] = 2.0 * (x * z - w * y)
    R[2][1] = 2.0 * (y * z + w * x)
    R[2][2] = 1.0 - 2.0 * (x * x + y * y)


cdef inline void dcm_from_euler(double p, double r, double a, m33 R, m33 dp, m33 dr, m33 da) noexcept nogil:
    cdef double sp = sin(p), cp = cos(p), sr = sin(r), cr = cos(r), sa = sin(a), ca = cos(a)
    R[0][0] = ca * cr + sa * sp * sr
    R[0][1] = sa * cp
    R[0][2] = ca * sr - sa * sp * cr
    R[1][0] = -sa * cr + ca * sp * sr
    R[1][1] = ca * cp
    R[1][2] = -sa * sr - ca * sp * cr
    R[2][0] = -cp * sr
    R[2][1] = sp
    R[2][2] = cp * cr

    dp[0][0] = sa * cp * sr
    dp[0][1] = -sa * sp
    dp[0][2] = -sa * cp * cr
    dp[1][0] = ca * cp * sr
    dp[1][1] = -ca * sp
    dp[1][2] = -ca * cp * cr
    dp[2][0] = sp * sr
    dp[2][1] = cp
    dp[2][2] = -sp * cr

    dr[0][0] = -ca * sr + sa * sp * cr
    dr[0][1] = 0.0
    dr[0][2] = ca * cr + sa * sp * sr
    dr[1][0] = sa * sr + ca * sp * cr
    dr[1][1] = 0.0
    dr[1][2] = -sa * cr + ca * sp * sr
    dr[2][0] = -cp * cr
    dr[2][1] = 0.0
    dr[2][2] = -cp * sr

    da[0][0] = -sa * cr + ca * sp * sr
    da[0][1] = ca * cp
    da[0][2] = -sa * sr - ca * sp * cr
    da[1][0] = -ca * cr - sa * sp * sr
    da[1][1] = -sa * cp
    da[1][2] = -ca * sr + sa * sp * cr
    da[2][0] = 0.0
    da[2][1] = 0.0
    da[2][2] = 0.0


cdef inline void cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void mul33(m33 A, m33 B, m33 out) noexcept nogil:
    cdef int i, j, k
    cdef double s
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s = s + A[i][k] * B[k][j]
            out[i][j] = s


cdef inline void matvec(m33 A, const double* v, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = A[i][0] * v[0] + A[i][1] * v[1] + A[i][2] * v[2]


cdef inline void matTvec(m33 A, const double* v, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = A[0][i] * v[0] + A[1][i] * v[1] + A[2][i] * v[2]


cdef struct Earth:
    double a, e2, we, ge, gk, fa


cdef Earth _unpack(earth):
    cdef Earth E
    E.a, E.e2, E.we, E.ge, E.gk, E.fa = earth
    return E


def nav_step(pos, vel, q, fb, wb, double dt, earth):
    """One mechanization step with bias-compensated ``fb`` and ``wb``."""
    cdef Earth E = _unpack(earth)
    cdef double lat = pos[0], lon = pos[1], h = pos[2]
    cdef double v[3]
    cdef double qq[4]
    cdef double f[3]
    cdef double w[3]
    cdef int i
    for i in range(3):
        v[i] = vel[i]
        f[i] = fb[i]
        w[i] = wb[i]
    for i in range(4):
        qq[i] = q[i]

    cdef double s = sin(lat), c = cos(lat)
    cdef double den = 1.0 - E.e2 * s * s
    cdef double sq = sqrt(den)
    cdef double N = E.a / sq
    cdef double M = E.a * (1.0 - E.e2) / (den * sq)
    cdef double g = E.ge * (1.0 + E.gk * s * s) / sq - E.fa * h
    cdef double wie[3]
    cdef double wel[3]
    cdef double W[3]
    wie[0] = 0.0
    wie[1] = E.we * c
    wie[2] = E.we * s
    wel[0] = -v[1] / (M + h)
    wel[1] = v[0] / (N + h)
    wel[2] = v[0] * (s / c) / (N + h)
    for i in range(3):
        W[i] = wie[i] + wel[i]

    cdef m33 R0, R1
    cdef double tmp[3]
    dcm_from_quat(qq, R0)
    matTvec(R0, W, tmp)
    cdef double ox = 0.5 * dt * (w[0] - tmp[0])
    cdef double oy = 0.5 * dt * (w[1] - tmp[1])
    cdef double oz = 0.5 * dt * (w[2] - tmp[2])
    cdef double q1[4]
    q1[0] = qq[0] - qq[1] * ox - qq[2] * oy - qq[3] * oz
    q1[1] = qq[1] + qq[0] * ox + qq[2] * oz - qq[3] * oy
    q1[2] = qq[2] + qq[0] * oy - qq[1] * oz + qq[3] * ox
    q1[3] = qq[3] + qq[0] * oz + qq[1] * oy - qq[2] * ox
    cdef double nq = sqrt(q1[0] * q1[0] + q1[1] * q1[1] + q1[2] * q1[2] + q1[3] * q1[3])
    for i in range(4):
        q1[i] = q1[i] / nq
    dcm_from_quat(q1, R1)

    cdef double wt[3]
    cdef double cor[3]
    cdef double rf[3]
    for i in range(3):
        wt[i] = 2.0 * wie[i] + wel[i]
    cross(wt, v, cor)
    matvec(R1, f, rf)
    cdef cnp.ndarray[double, ndim=1] v1 = np.empty(3)
    for i in range(3):
        v1[i] = v[i] + (rf[i] - cor[i]) * dt
    v1[2] = v1[2] - g * dt

    cdef cnp.ndarray[double, ndim=1] p1 = np.empty(3)
    p1[0] = lat + v1[1] * dt / (M + h)
    p1[1] = lon + v1[0] * dt / ((N + h) * c)
    p1[2] = h + v1[2] * dt
    cdef cnp.ndarray[double, ndim=1] qo = np.empty(4)
    for i in range(4):
        qo[i] = q1[i]
    return p1, v1, qo


cdef void nav_jacobian(const double* x, const double* fb, const double* wb, double dt,
                       Earth E, double* out, double[:, ::1] J) noexcept nogil:
    cdef int i, j, k, l
    cdef double lat = x[0], lon = x[1], h = x[2]
    cdef double v[3]
    cdef double fc[3]
    cdef double wc[3]
    for i in range(3):
        v[i] = x[3 + i]
        fc[i] = fb[i] - x[12 + i]
        wc[i] = wb[i] - x[9 + i]

    cdef double s = sin(lat), c = cos(lat)
    cdef double t = s / c
    cdef double den = 1.0 - E.e2 * s * s
    cdef double sq = sqrt(den)
    cdef double N = E.a / sq
    cdef double M = E.a * (1.0 - E.e2) / (den * sq)
    cdef double dM = 3.0 * E.a * (1.0 - E.e2) * E.e2 * s * c / (den * den * sq)
    cdef double dN = E.a * E.e2 * s * c / (den * sq)
    cdef double Mh = M + h, Nh = N + h
    cdef double g = E.ge * (1.0 + E.gk * s * s) / sq - E.fa * h
    cdef double dg_dlat = E.ge * (E.gk / sq + (1.0 + E.gk * s * s) * E.e2 / (2.0 * den * sq)) * 2.0 * s * c

    cdef double wie[3]
    cdef double wel[3]
    cdef double W[3]
    cdef double dwie[3]
    cdef double dwel_lat[3]
    cdef double dwel_h[3]
    cdef m33 dwel_v
    wie[0] = 0.0
    wie[1] = E.we * c
    wie[2] = E.we * s
    wel[0] = -v[1] / Mh
    wel[1] = v[0] / Nh
    wel[2] = v[0] * t / Nh
    for i in range(3):
        W[i] = wie[i] + wel[i]
    dwie[0] = 0.0
    dwie[1] = -E.we * s
    dwie[2] = E.we * c
    dwel_lat[0] = v[1] * dM / (Mh * Mh)
    dwel_lat[1] = -v[0] * dN / (Nh * Nh)
    dwel_lat[2] = v[0] * (1.0 / (c * c * Nh) - t * dN / (Nh * Nh))
    dwel_h[0] = v[1] / (Mh * Mh)
    dwel_h[1] = -v[0] / (Nh * Nh)
    dwel_h[2] = -v[0] * t / (Nh * Nh)
    for i in range(3):
        for j in range(3):
            dwel_v[i][j] = 0.0
    dwel_v[0][1] = -1.0 / Mh
    dwel_v[1][0] = 1.0 / Nh
    dwel_v[2][0] = t / Nh

    cdef m33 R0, dR0p, dR0r, dR0a
    dcm_from_euler(x[6], x[7], x[8], R0, dR0p, dR0r, dR0a)

    cdef double theta[3]
    cdef double tmp[3]
    cdef double tmp2[3]
    matTvec(R0, W, tmp)
    for i in range(3):
        theta[i] = dt * (wc[i] - tmp[i])

    # d(theta)/dx, 3 x 15
    cdef double dth[3][15]
    for i in range(3):
        for k in range(15):
            dth[i][k] = 0.0
    for i in range(3):
        tmp2[i] = dwie[i] + dwel_lat[i]
    matTvec(R0, tmp2, tmp)
    for i in range(3):
        dth[i][0] = -dt * tmp[i]
    matTvec(R0, dwel_h, tmp)
    for i in range(3):
        dth[i][2] = -dt * tmp[i]
    for j in range(3):
        for i in range(3):
            tmp2[i] = dwel_v[i][j]
        matTvec(R0, tmp2, tmp)
        for i in range(3):
            dth[i][3 + j] = -dt * tmp[i]
    matTvec(dR0p, W, tmp)
    for i in range(3):
        dth[i][6] = -dt * tmp[i]
    matTvec(dR0r, W, tmp)
    for i in range(3):
        dth[i][7] = -dt * tmp[i]
    matTvec(dR0a, W, tmp)
    for i in range(3):
        dth[i][8] = -dt * tmp[i]
    for i in range(3):
        dth[i][9 + i] = -dt

    # increment rotation and gradient
    cdef double tq = 0.25 * (theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2])
    cdef double sden = 1.0 + tq
    cdef m33 C
    for i in range(3):
        for j in range(3):
            C[i][j] = 0.5 * theta[i] * theta[j]
        C[i][i] = C[i][i] + 1.0 - tq
    C[0][1] = C[0][1] - theta[2]
    C[0][2] = C[0][2] + theta[1]
    C[1][0] = C[1][0] + theta[2]
    C[1][2] = C[1][2] - theta[0]
    C[2][0] = C[2][0] - theta[1]
    C[2][1] = C[2][1] + theta[0]
    for i in range(3):
        for j in range(3):
            C[i][j] = C[i][j] / sden

    cdef double dC[3][3][3]
    cdef int m
    for m in range(3):
        for i in range(3):
            for j in range(3):
                dC[m][i][j] = -0.5 * theta[m] * C[i][j]
            dC[m][i][i] = dC[m][i][i] - 0.5 * theta[m]
        for i in range(3):
            dC[m][m][i] = dC[m][m][i] + 0.5 * theta[i]
            dC[m][i][m] = dC[m][i][m] + 0.5 * theta[i]
    # skew(e_m)
    dC[0][1][2] -= 1.0
    dC[0][2][1] += 1.0
    dC[1][0][2] += 1.0
    dC[1][2][0] -= 1.0
    dC[2][0][1] -= 1.0
    dC[2][1][0] += 1.0
    for m in range(3):
        for i in range(3):
            for j in range(3):
                dC[m][i][j] = dC[m][i][j] / sden

    cdef m33 R1
    mul33(R0, C, R1)

    # dR1/dx_k
    cdef double dR1[15][3][3]
    cdef m33 dCk, prod
    for k in range(15):
        for i in range(3):
            for j in range(3):
                dCk[i][j] = dC[0][i][j] * dth[0][k] + dC[1][i][j] * dth[1][k] + dC[2][i][j] * dth[2][k]
        mul33(R0, dCk, prod)
        for i in range(3):
            for j in range(3):
                dR1[k][i][j] = prod[i][j]
    mul33(dR0p, C, prod)
    for i in range(3):
        for j in range(3):
            dR1[6][i][j] += prod[i][j]
    mul33(dR0r, C, prod)
    for i in range(3):
        for j in range(3):
            dR1[7][i][j] += prod[i][j]
    mul33(dR0a, C, prod)
    for i in range(3):
        for j in range(3):
            dR1[8][i][j] += prod[i][j]

    for i in range(9):
        for k in range(15):
            J[i, k] = 0.0

    # attitude
    cdef double R20 = R1[2][0], R21 = R1[2][1], R22 = R1[2][2], R01 = R1[0][1], R11 = R1[1][1]
    cdef double sr21 = R21
    if sr21 > 1.0:
        sr21 = 1.0
    elif sr21 < -1.0:
        sr21 = -1.0
    out[6] = asin(sr21)
    out[7] = atan2(-R20, R22)
    out[8] = atan2(R01, R11)
    if out[8] < 0.0:
        out[8] = out[8] + 2.0 * M_PI
    if out[8] >= 2.0 * M_PI:
        out[8] = 0.0
    cdef double ip = 1.0 / sqrt(1.0 - R21 * R21)
    cdef double ir = 1.0 / (R20 * R20 + R22 * R22)
    cdef double ia = 1.0 / (R01 * R01 + R11 * R11)
    for k in range(15):
        J[6, k] = dR1[k][2][1] * ip
        J[7, k] = (R20 * dR1[k][2][2] - R22 * dR1[k][2][0]) * ir
        J[8, k] = (R11 * dR1[k][0][1] - R01 * dR1[k][1][1]) * ia

    # velocity
    cdef double wt[3]
    cdef double cor[3]
    cdef double rf[3]
    cdef double v1[3]
    for i in range(3):
        wt[i] = 2.0 * wie[i] + wel[i]
    cross(wt, v, cor)
    matvec(R1, fc, rf)
    for i in range(3):
        v1[i] = v[i] + (rf[i] - cor[i]) * dt
    v1[2] = v1[2] - g * dt
    for i in range(3):
        out[3 + i] = v1[i]

    for k in range(15):
        for i in range(3):
            J[3 + i, k] = dt * (dR1[k][i][0] * fc[0] + dR1[k][i][1] * fc[1] + dR1[k][i][2] * fc[2])
    for i in range(3):
        tmp2[i] = 2.0 * dwie[i] + dwel_lat[i]
    cross(tmp2, v, tmp)
    for i in range(3):
        J[3 + i, 0] -= dt * tmp[i]
    J[5, 0] -= dt * dg_dlat
    cross(dwel_h, v, tmp)
    for i in range(3):
        J[3 + i, 2] -= dt * tmp[i]
    J[5, 2] += dt * E.fa
    # d/dv of -(wt x v) = -skew(wt) + skew(v) dwel_v
    cdef m33 sv, swt
    sv[0][0] = 0.0
    sv[0][1] = -v[2]
    sv[0][2] = v[1]
    sv[1][0] = v[2]
    sv[1][1] = 0.0
    sv[1][2] = -v[0]
    sv[2][0] = -v[1]
    sv[2][1] = v[0]
    sv[2][2] = 0.0
    swt[0][0] = 0.0
    swt[0][1] = -wt[2]
    swt[0][2] = wt[1]
    swt[1][0] = wt[2]
    swt[1][1] = 0.0
    swt[1][2] = -wt[0]
    swt[2][0] = -wt[1]
    swt[2][1] = wt[0]
    swt[2][2] = 0.0
    mul33(sv, dwel_v, prod)
    for i in range(3):
        for j in range(3):
            J[3 + i, 3 + j] += dt * (prod[i][j] - swt[i][j])
        J[3 + i, 3 + i] += 1.0
        for j in range(3):
            J[3 + i, 12 + j] -= dt * R1[i][j]

    # position
    cdef double D = Nh * c
    out[2] = h + v1[2] * dt
    out[0] = lat + v1[1] * dt / Mh
    out[1] = lon + v1[0] * dt / D
    for k in range(15):
        J[2, k] = dt * J[5, k]
        J[0, k] = dt * J[4, k] / Mh
        J[1, k] = dt * J[3, k] / D
    J[2, 2] += 1.0
    J[0, 0] += 1.0 - dt * v1[1] * dM / (Mh * Mh)
    J[0, 2] -= dt * v1[1] / (Mh * Mh)
    J[1, 1] += 1.0
    J[1, 0] -= dt * v1[0] * (dN * c - Nh * s) / (D * D)
    J[1, 2] -= dt * v1[0] * c / (D * D)


cdef void propagate(double[:, ::1] P, double[:, ::1] Phi, double[:, ::1] Qd,
                    double[:, ::1] T, double[:, ::1] P1) noexcept nogil:
    cdef int i, j, k
    cdef double s
    for i in range(15):
        for j in range(15):
            s = 0.0
            for k in range(15):
                s = s + Phi[i, k] * P[k, j]
            T[i, j] = s
    for i in range(15):
        for j in range(15):
            s = 0.0
            for k in range(15):
                s = s + T[i, k] * Phi[j, k]
            P1[i, j] = s + Qd[i, j]
    for i in range(15):
        for j in range(i + 1, 15):
            s = 0.5 * (P1[i, j] + P1[j, i])
            P1[i, j] = s
            P1[j, i] = s


def propagate_cov(P, Phi, Qd):
    cdef double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[:, ::1] Fv = np.ascontiguousarray(Phi, dtype=np.float64)
    cdef double[:, ::1] Qv = np.ascontiguousarray(Qd, dtype=np.float64)
    T = np.empty((15, 15))
    P1 = np.empty((15, 15))
    propagate(Pv, Fv, Qv, T, P1)
    return P1


def predict_step(x, P, fb, wb, double dt, beta, Qd, bint frozen, earth):
    """EKF prediction on the total state; see ``_kernels_py.predict_step``."""
    cdef Earth E = _unpack(earth)
    cdef cnp.ndarray[double, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double f[3]
    cdef double w[3]
    cdef int i
    for i in range(3):
        f[i] = fb[i]
        w[i] = wb[i]
    Phi = np.eye(15)
    cdef double[:, ::1] Fv = Phi
    x1 = xv.copy()
    cdef double[::1] x1v = x1
    cdef double d
    for i in range(6):
        d = 1.0 - beta[i] * dt
        x1v[9 + i] = xv[9 + i] * d
        Fv[9 + i, 9 + i] = d
    cdef double out[9]
    if not frozen:
        nav_jacobian(&xv[0], f, w, dt, E, out, Fv[:9, :])
        for i in range(9):
            x1v[i] = out[i]
    return x1, propagate_cov(P, Phi, Qd), Phi
