"""Pure-Python (numpy) implementation of the per-sample hot kernels.

This module is the fallback for ``_ckernels`` and the reference the compiled
version is tested against. Both expose the same three functions:

``nav_step``
    one strapdown mechanization step (attitude, velocity, position)
``predict_step``
    one EKF prediction on the 15-element total state, returning the
    propagated state, covariance and the transition matrix
``earth_terms``
    radii, gravity and rotation-rate terms shared by the two

Earth constants are passed as a 6-tuple ``(a, e2, omega_e, g_equator, g_k,
free_air)`` so the kernels carry no Python-object state.
"""

from __future__ import annotations

import math

import numpy as np

_I3 = np.eye(3)


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _dcm_from_quat(q):
    w, x, y, z = q
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def _dcm_from_euler(p, r, a):
    sp, cp = math.sin(p), math.cos(p)
    sr, cr = math.sin(r), math.cos(r)
    sa, ca = math.sin(a), math.cos(a)
    R = np.array(
        [
            [ca * cr + sa * sp * sr, sa * cp, ca * sr - sa * sp * cr],
            [-sa * cr + ca * sp * sr, ca * cp, -sa * sr - ca * sp * cr],
            [-cp * sr, sp, cp * cr],
        ]
    )
    dp = np.array(
        [
            [sa * cp * sr, -sa * sp, -sa * cp * cr],
            [ca * cp * sr, -ca * sp, -ca * cp * cr],
            [sp * sr, cp, -sp * cr],
        ]
    )
    dr = np.array(
        [
            [-ca * sr + sa * sp * cr, 0.0, ca * cr + sa * sp * sr],
            [sa * sr + ca * sp * cr, 0.0, -sa * cr + ca * sp * sr],
            [-cp * cr, 0.0, -cp * sr],
        ]
    )
    da = np.array(
        [
            [-sa * cr + ca * sp * sr, ca * cp, -sa * sr - ca * sp * cr],
            [-ca * cr - sa * sp * sr, -sa * cp, -ca * sr + sa * sp * cr],
            [0.0, 0.0, 0.0],
        ]
    )
    return R, (dp, dr, da)


def _quat_from_dcm(R):
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    i = int(np.argmax((tr, R[0, 0], R[1, 1], R[2, 2])))
    if i == 0:
        w = 0.5 * math.sqrt(1.0 + tr)
        f = 0.25 / w
        q = (w, (R[2, 1] - R[1, 2]) * f, (R[0, 2] - R[2, 0]) * f, (R[1, 0] - R[0, 1]) * f)
    elif i == 1:
        x = 0.5 * math.sqrt(1.0 + 2.0 * R[0, 0] - tr)
        f = 0.25 / x
        q = ((R[2, 1] - R[1, 2]) * f, x, (R[0, 1] + R[1, 0]) * f, (R[0, 2] + R[2, 0]) * f)
    elif i == 2:
        y = 0.5 * math.sqrt(1.0 + 2.0 * R[1, 1] - tr)
        f = 0.25 / y
        q = ((R[0, 2] - R[2, 0]) * f, (R[0, 1] + R[1, 0]) * f, y, (R[1, 2] + R[2, 1]) * f)
    else:
        z = 0.5 * math.sqrt(1.0 + 2.0 * R[2, 2] - tr)
        f = 0.25 / z
        q = ((R[1, 0] - R[0, 1]) * f, (R[0, 2] + R[2, 0]) * f, (R[1, 2] + R[2, 1]) * f, z)
    q = np.array(q)
    if q[0] < 0.0:
        q = -q
    return q / math.sqrt(q @ q)


def earth_terms(lat, h, ve, vn, earth):
    """Return ``(M, N, g, w_ie, w_el)`` at a position/velocity."""
    a, e2, we, ge, gk, fa = earth
    s, c = math.sin(lat), math.cos(lat)
    den = 1.0 - e2 * s * s
    sq = math.sqrt(den)
    N = a / sq
    M = a * (1.0 - e2) / (den * sq)
    g = ge * (1.0 + gk * s * s) / sq - fa * h
    w_ie = np.array([0.0, we * c, we * s])
    w_el = np.array([-vn / (M + h), ve / (N + h), ve * (s / c) / (N + h)])
    return M, N, g, w_ie, w_el


def _attitude_rate_step(q, w_lb, dt):
    # q_{k+1} = q_k + 0.5 * Omega(w) q_k dt, then renormalized
    w, x, y, z = q
    ox, oy, oz = 0.5 * dt * w_lb
    q1 = np.array(
        [
            w - x * ox - y * oy - z * oz,
            x + w * ox + y * oz - z * oy,
            y + w * oy - x * oz + z * ox,
            z + w * oz + x * oy - y * ox,
        ]
    )
    return q1 / math.sqrt(q1 @ q1)


def nav_step(pos, vel, q, fb, wb, dt, earth):
    """One mechanization step with bias-compensated ``fb`` and ``wb``.

    Returns ``(pos', vel', q')``. Order is attitude, then velocity (using the
    updated attitude), then position (using the updated velocity).
    """
    lat, lon, h = pos
    ve, vn, vu = vel
    M, N, g, w_ie, w_el = earth_terms(lat, h, ve, vn, earth)
    R0 = _dcm_from_quat(q)
    w_lb = np.asarray(wb) - R0.T @ (w_ie + w_el)
    q1 = _attitude_rate_step(q, w_lb, dt)
    R1 = _dcm_from_quat(q1)
    vel = np.asarray(vel, dtype=np.float64)
    acc = R1 @ fb - np.cross(2.0 * w_ie + w_el, vel)
    acc[2] -= g
    v1 = vel + acc * dt
    h1 = h + v1[2] * dt
    lat1 = lat + v1[1] * dt / (M + h)
    lon1 = lon + v1[0] * dt / ((N + h) * math.cos(lat))
    return np.array([lat1, lon1, h1]), v1, q1


def _euler_from_dcm(R):
    p = math.asin(max(-1.0, min(1.0, R[2, 1])))
    r = math.atan2(-R[2, 0], R[2, 2])
    a = math.atan2(R[0, 1], R[1, 1])
    if a < 0.0:
        a += 2.0 * math.pi
    if a >= 2.0 * math.pi:
        a = 0.0
    return p, r, a


def predict_step(x, P, fb, wb, dt, beta, Qd, frozen, earth):
    """EKF prediction on the total state.

    Parameters
    ----------
    x : (15,) state ``[lat, lon, h, ve, vn, vu, p, r, a, bw(3), bf(3)]``
    P : (15, 15) covariance
    fb, wb : raw accelerometer / gyro sample (biases are taken from ``x``)
    dt : step in seconds
    beta : (6,) inverse correlation times, gyro then accelerometer
    Qd : (15, 15) discrete process noise added to ``P``
    frozen : if true the navigation states are held (stopping mechanism)
    earth : Earth constants tuple

    Returns
    -------
    x1, P1, Phi
    """
    x = np.asarray(x, dtype=np.float64)
    decay = 1.0 - np.asarray(beta) * dt
    Phi = np.eye(15)
    x1 = x.copy()
    x1[9:15] = x[9:15] * decay
    Phi[9:15, 9:15] = np.diag(decay)
    if not frozen:
        x1[:9], Phi[:9, :] = _nav_jacobian(x, fb, wb, dt, earth)
    return x1, propagate_cov(P, Phi, Qd), Phi


def _nav_jacobian(x, fb, wb, dt, earth):
    a_e, e2, we, ge, gk, fa = earth
    lat, lon, h = x[0], x[1], x[2]
    v = x[3:6]
    fc = np.asarray(fb) - x[12:15]
    wc = np.asarray(wb) - x[9:12]

    s, c = math.sin(lat), math.cos(lat)
    t = s / c
    den = 1.0 - e2 * s * s
    sq = math.sqrt(den)
    N = a_e / sq
    M = a_e * (1.0 - e2) / (den * sq)
    dM = 3.0 * a_e * (1.0 - e2) * e2 * s * c / (den * den * sq)
    dN = a_e * e2 * s * c / (den * sq)
    Mh, Nh = M + h, N + h
    g = ge * (1.0 + gk * s * s) / sq - fa * h
    dg_dlat = ge * (gk / sq + (1.0 + gk * s * s) * e2 / (2.0 * den * sq)) * 2.0 * s * c

    w_ie = np.array([0.0, we * c, we * s])
    w_el = np.array([-v[1] / Mh, v[0] / Nh, v[0] * t / Nh])
    W = w_ie + w_el
    dwie_dlat = np.array([0.0, -we * s, we * c])
    dwel_dlat = np.array(
        [v[1] * dM / Mh**2, -v[0] * dN / Nh**2, v[0] * (1.0 / (c * c * Nh) - t * dN / Nh**2)]
    )
    dwel_dh = np.array([v[1] / Mh**2, -v[0] / Nh**2, -v[0] * t / Nh**2])
    dwel_dv = np.array([[0.0, -1.0 / Mh, 0.0], [1.0 / Nh, 0.0, 0.0], [t / Nh, 0.0, 0.0]])

    R0, dR0 = _dcm_from_euler(x[6], x[7], x[8])
    theta = dt * (wc - R0.T @ W)

    # d(theta)/dx, 3 x 15
    dth = np.zeros((3, 15))
    dth[:, 0] = -dt * R0.T @ (dwie_dlat + dwel_dlat)
    dth[:, 2] = -dt * R0.T @ dwel_dh
    dth[:, 3:6] = -dt * R0.T @ dwel_dv
    for j in range(3):
        dth[:, 6 + j] = -dt * dR0[j].T @ W
    dth[:, 9:12] = -dt * _I3

    # increment rotation C(theta) = R(normalize([1, theta/2])) and its gradient
    tq = 0.25 * (theta @ theta)
    sden = 1.0 + tq
    A = (1.0 - tq) * _I3 + 0.5 * np.outer(theta, theta) + _skew(theta)
    C = A / sden
    dC = np.empty((3, 3, 3))
    for i in range(3):
        e = _I3[i]
        dA = -0.5 * theta[i] * _I3 + 0.5 * (np.outer(e, theta) + np.outer(theta, e)) + _skew(e)
        dC[i] = (dA - C * 0.5 * theta[i]) / sden

    R1 = R0 @ C
    # dR1/dx_k for every state k, (15, 3, 3)
    dCk = np.einsum("iab,ik->kab", dC, dth)
    dR1 = np.einsum("ab,kbc->kac", R0, dCk)
    for j in range(3):
        dR1[6 + j] += dR0[j] @ C

    out = np.empty(9)
    J = np.zeros((9, 15))

    # attitude rows from R1
    R20, R21, R22, R01, R11 = R1[2, 0], R1[2, 1], R1[2, 2], R1[0, 1], R1[1, 1]
    out[6:9] = _euler_from_dcm(R1)
    J[6] = dR1[:, 2, 1] / math.sqrt(1.0 - R21 * R21)
    J[7] = (R20 * dR1[:, 2, 2] - R22 * dR1[:, 2, 0]) / (R20 * R20 + R22 * R22)
    J[8] = (R11 * dR1[:, 0, 1] - R01 * dR1[:, 1, 1]) / (R01 * R01 + R11 * R11)

    # velocity rows
    wt = 2.0 * w_ie + w_el
    acc = R1 @ fc - np.cross(wt, v)
    acc[2] -= g
    v1 = v + acc * dt
    out[3:6] = v1
    dv = np.zeros((3, 15))
    dv[:, :] = dt * np.einsum("kab,b->ak", dR1, fc)
    dv[:, 0] -= dt * np.cross(2.0 * dwie_dlat + dwel_dlat, v)
    dv[2, 0] -= dt * dg_dlat
    dv[:, 2] -= dt * np.cross(dwel_dh, v)
    dv[2, 2] += dt * fa
    dv[:, 3:6] += _I3 - dt * (_skew(wt) - _skew(v) @ dwel_dv)
    dv[:, 12:15] -= dt * R1
    J[3:6] = dv

    # position rows
    D = Nh * c
    out[2] = h + v1[2] * dt
    out[0] = lat + v1[1] * dt / Mh
    out[1] = lon + v1[0] * dt / D
    J[2] = dt * dv[2]
    J[2, 2] += 1.0
    J[0] = dt * dv[1] / Mh
    J[0, 0] += 1.0 - dt * v1[1] * dM / Mh**2
    J[0, 2] -= dt * v1[1] / Mh**2
    J[1] = dt * dv[0] / D
    J[1, 1] += 1.0
    J[1, 0] -= dt * v1[0] * (dN * c - Nh * s) / D**2
    J[1, 2] -= dt * v1[0] * c / D**2
    return out, J


def propagate_cov(P, Phi, Qd):
    P1 = Phi @ P @ Phi.T + Qd
    return 0.5 * (P1 + P1.T)
