"""Shared builders for synthetic test trajectories."""

import math

import numpy as np

from obmsnav import kernels
from obmsnav.frames import WGS84, Geodetic, LocalFrame
from obmsnav.fusion import assemble_phi
from obmsnav.mechanization import NavState
from obmsnav.trajectory import Truth, generate_trajectory

ANCHOR = Geodetic(math.radians(43.65), math.radians(-79.38), 80.0)
FRAME = LocalFrame(ANCHOR, max_range=None)

# pull away, then a right-angle turn roughly every 20 s; still driving at 60 s
TURNING_ROUTE = [[0.0, 0.0], [150.0, 0.0], [150.0, 150.0], [0.0, 150.0], [0.0, 300.0]]


def turning_trajectory(**kw):
    opts = dict(cruise_speed=8.0, turn_speed=5.0, turn_radius=15.0, initial_dwell=2.0, final_dwell=0.0)
    opts.update(kw)
    return generate_trajectory(TURNING_ROUTE, ANCHOR, **opts)


def init_from_truth(truth: Truth, k: int = 0) -> NavState:
    return NavState(float(truth.t[k]), Geodetic(*truth.pos[k]), truth.vel[k].copy(), truth.q[k].copy())


def horizontal_error(pos_a, pos_b) -> np.ndarray:
    a = FRAME.to_local_array(*np.asarray(pos_a).T)
    b = FRAME.to_local_array(*np.asarray(pos_b).T)
    return np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])


EARTH = kernels.earth_tuple(WGS84)
# central-difference steps per state: rad, rad, m, m/s x3, rad x3, biases
FD_STEPS = np.array([1e-7, 1e-7, 1e-2, 1e-4, 1e-4, 1e-4, 1e-6, 1e-6, 1e-6] + [1e-6] * 6)


def fd_phi(x, f, w, beta, dt):
    cols = []
    zeros = np.zeros((15, 15))
    for i, h in enumerate(FD_STEPS):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        yp = np.asarray(kernels.predict_step(xp, zeros, f, w, dt, beta, zeros, False, EARTH)[0])
        ym = np.asarray(kernels.predict_step(xm, zeros, f, w, dt, beta, zeros, False, EARTH)[0])
        cols.append((yp - ym) / (2 * h))
    return np.column_stack(cols)


def phi_mismatch(x, f, w, spec, dt):
    """Worst column error of the analytic transition matrix relative to the tolerance."""
    Phi = assemble_phi(x, f, w, spec, dt)
    fd = fd_phi(x, f, w, spec.beta, dt)
    worst = 0.0
    for j in range(15):
        tol = max(1e-4, 1e-3 * np.max(np.abs(Phi[:, j])))
        worst = max(worst, np.max(np.abs(Phi[:, j] - fd[:, j])) / tol)
    return worst


def random_state(rng):
    x = np.empty(15)
    x[0] = rng.uniform(-1.0, 1.0)
    x[1] = rng.uniform(-3.0, 3.0)
    x[2] = rng.uniform(-50, 500)
    x[3:6] = rng.uniform(-20, 20, 3)
    x[6] = rng.uniform(-1.2, 1.2)
    x[7] = rng.uniform(-3.0, 3.0)
    x[8] = rng.uniform(0.2, 2 * math.pi - 0.2)
    x[9:12] = rng.normal(0, 1e-3, 3)
    x[12:15] = rng.normal(0, 0.05, 3)
    return x


def random_imu(rng):
    return rng.normal(0, 2.0, 3) + [0, 0, 9.8], rng.normal(0, 0.3, 3)
