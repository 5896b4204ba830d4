"""Strapdown INS mechanization in the local-level (ENU) frame.

The single-step functions below spell out the mechanization equations one at
a time. ``mechanize`` runs the same arithmetic through the selected kernel
(``obmsnav.kernels``), which fuses the steps for speed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import kernels
from .frames import (
    WGS84,
    Attitude,
    EarthModel,
    Geodetic,
    attitude_from_quat,
    dcm_from_quat,
    quat_normalize,
    rotation_body_to_local,
    skew,
)
from .sensors import BiasState, StationaryWindow, is_stationary

log = logging.getLogger(__name__)

POLE_TOL = 1e-6


class StreamError(ValueError):
    """Sensor stream is malformed (ordering, gaps)."""


class PolarSingularityError(ValueError):
    """Latitude too close to a pole for the local-level mechanization."""


@dataclass
class NavState:
    t: float
    pos: Geodetic
    vel: NDArray[np.float64]
    q: NDArray[np.float64]

    @property
    def att(self) -> Attitude:
        return attitude_from_quat(self.q)


@dataclass
class MechConfig:
    v_eps: float = 0.1
    stop_mechanism: bool = True
    bias_removal: bool = True
    rezero_gyro: bool = True
    rezero_min_duration: float = 2.0
    nominal_rate: float = 20.0
    gap_factor: float = 10.0
    earth: EarthModel = field(default_factory=lambda: WGS84)

    def __post_init__(self) -> None:
        if self.v_eps < 0:
            raise ValueError("v_eps must be >= 0")


@dataclass
class ImuStream:
    t: NDArray[np.float64]
    f: NDArray[np.float64]  # (n, 3)
    w: NDArray[np.float64]  # (n, 3)

    def __len__(self) -> int:
        return len(self.t)

    def slice(self, i0: int, i1: int | None = None) -> "ImuStream":
        return ImuStream(self.t[i0:i1], self.f[i0:i1], self.w[i0:i1])


@dataclass
class OdoStream:
    t: NDArray[np.float64]
    v: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class NavTrack:
    """Navigation solution sampled at the IMU epochs."""

    t: NDArray[np.float64]
    pos: NDArray[np.float64]  # lat, lon, h
    vel: NDArray[np.float64]  # ve, vn, vu
    att: NDArray[np.float64]  # p, r, a
    stationary: NDArray[np.bool_]
    q: NDArray[np.float64] | None = None

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> NavState:
        q = self.q[i] if self.q is not None else None
        return NavState(float(self.t[i]), Geodetic(*self.pos[i]), self.vel[i].copy(), q)

    def rows(self) -> NDArray[np.float64]:
        return np.column_stack([self.t, self.pos, self.vel, self.att])


def earth_rate_l(lat: float, earth: EarthModel = WGS84) -> NDArray[np.float64]:
    return earth.earth_rate_l(lat)


def transport_rate(vel: ArrayLike, pos: Geodetic, earth: EarthModel = WGS84) -> NDArray[np.float64]:
    lat, _, h = pos
    if abs(abs(lat) - math.pi / 2) < POLE_TOL:
        raise PolarSingularityError(f"latitude {lat} too close to a pole")
    ve, vn, _ = vel
    m, n = earth.radii(lat)
    return np.array([-vn / (m + h), ve / (n + h), ve * math.tan(lat) / (n + h)])


def correct_gyro(
    w_b: ArrayLike,
    bias: ArrayLike,
    att: Attitude,
    vel: ArrayLike,
    pos: Geodetic,
    earth: EarthModel = WGS84,
) -> NDArray[np.float64]:
    """Body rate relative to the local-level frame."""
    R_lb = rotation_body_to_local(att).T
    w_ib = np.asarray(w_b, dtype=np.float64) - np.asarray(bias, dtype=np.float64)
    return w_ib - R_lb @ (earth_rate_l(pos[0], earth) + transport_rate(vel, pos, earth))


def attitude_step(q: ArrayLike, w_lb: ArrayLike, dt: float) -> NDArray[np.float64]:
    """First-order quaternion update followed by renormalization."""
    wx, wy, wz = w_lb
    omega = np.array(
        [
            [0.0, -wx, -wy, -wz],
            [wx, 0.0, wz, -wy],
            [wy, -wz, 0.0, wx],
            [wz, wy, -wx, 0.0],
        ]
    )
    q = np.asarray(q, dtype=np.float64)
    return quat_normalize(q + 0.5 * omega @ q * dt)


def velocity_step(
    v_l: ArrayLike,
    f_b: ArrayLike,
    bias: ArrayLike,
    q: ArrayLike,
    pos: Geodetic,
    dt: float,
    earth: EarthModel = WGS84,
) -> NDArray[np.float64]:
    """Velocity update; gravity enters as ``[0, 0, -g]`` so a level IMU at rest
    (sensing ``+g`` on its up axis) keeps its velocity."""
    v_l = np.asarray(v_l, dtype=np.float64)
    w_ie = earth_rate_l(pos[0], earth)
    w_el = transport_rate(v_l, pos, earth)
    g_l = np.array([0.0, 0.0, -earth.gravity(pos[0], pos[2])])
    f_l = dcm_from_quat(q) @ (np.asarray(f_b) - np.asarray(bias))
    return v_l + (f_l - (2.0 * skew(w_ie) + skew(w_el)) @ v_l + g_l) * dt


def position_step(pos: Geodetic, v_l: ArrayLike, dt: float, earth: EarthModel = WGS84) -> Geodetic:
    lat, lon, h = pos
    if abs(abs(lat) - math.pi / 2) < POLE_TOL:
        raise PolarSingularityError(f"latitude {lat} too close to a pole")
    ve, vn, vu = v_l
    m, n = earth.radii(lat)
    return Geodetic(
        lat + vn / (m + h) * dt,
        lon + ve / ((n + h) * math.cos(lat)) * dt,
        h + vu * dt,
    )


def project_odometer(v_odo: float, att: Attitude | ArrayLike) -> NDArray[np.float64]:
    """Forward odometer speed expressed in ENU."""
    p, _, a = att[0], att[1], att[2]
    return np.array([math.sin(a) * math.cos(p), math.cos(a) * math.cos(p), math.sin(p)]) * v_odo


def attitude_array_from_quat(q: NDArray[np.float64]) -> NDArray[np.float64]:
    """Vectorized pitch/roll/azimuth from an (n, 4) quaternion array."""
    w, x, y, z = q.T
    r21 = np.clip(2.0 * (y * z + w * x), -1.0, 1.0)
    r20 = 2.0 * (x * z - w * y)
    r22 = 1.0 - 2.0 * (x * x + y * y)
    r01 = 2.0 * (x * y - w * z)
    r11 = 1.0 - 2.0 * (x * x + z * z)
    a = np.mod(np.arctan2(r01, r11), 2.0 * math.pi)
    a[a >= 2.0 * math.pi] = 0.0
    return np.column_stack([np.arcsin(r21), np.arctan2(-r20, r22), a])


def check_stream_times(t: NDArray[np.float64], nominal_rate: float, gap_factor: float) -> list[int]:
    """Raise on non-increasing timestamps; return indices that follow a gap."""
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.argmax(dt <= 0)) + 1
        raise StreamError(f"non-increasing timestamp at sample {bad} (t={t[bad]!r})")
    gaps = np.flatnonzero(dt > gap_factor / nominal_rate) + 1
    for i in gaps:
        log.warning("IMU gap of %.3f s before t=%.3f", dt[i - 1], t[i])
    return [int(i) for i in gaps]


def mechanize(
    imu: ImuStream,
    odo: OdoStream | None,
    init: NavState,
    biases: BiasState,
    cfg: MechConfig | None = None,
) -> NavTrack:
    """Dead-reckon from ``init`` through an IMU stream.

    One output per IMU sample; the first equals ``init`` (taken at
    ``imu.t[0]``). When the stop mechanism is on and the vehicle is judged
    stationary, position and attitude are held and velocity is set to zero;
    once a stop has lasted ``rezero_min_duration`` the gyro bias is replaced
    by the mean gyro output over the stop. Re-zeroing is bias removal too, so
    it runs only when ``bias_removal`` is on.

    While held, the speed tested against ``v_eps`` is integrated from the
    last odometer sample onward rather than from zero at every epoch, so the
    hold releases within a few IMU samples of the vehicle pulling away even
    when the odometer still reports its previous zero.
    """
    cfg = cfg or MechConfig()
    earth = kernels.earth_tuple(cfg.earth)
    n = len(imu)
    check_stream_times(imu.t, cfg.nominal_rate, cfg.gap_factor)

    pos_out = np.empty((n, 3))
    vel_out = np.empty((n, 3))
    q_out = np.empty((n, 4))
    stat_out = np.zeros(n, dtype=bool)

    pos = np.array(init.pos, dtype=np.float64)
    vel = np.array(init.vel, dtype=np.float64)
    q = quat_normalize(init.q)
    if cfg.bias_removal:
        bw, bf = biases.gyro.copy(), biases.accel.copy()
    else:
        bw, bf = np.zeros(3), np.zeros(3)
    pos_out[0], vel_out[0], q_out[0] = pos, vel, q

    odo_t = odo.t if odo is not None else np.empty(0)
    odo_v = odo.v if odo is not None else np.empty(0)
    j = -1
    window = StationaryWindow(cfg.rezero_min_duration)
    step = kernels.nav_step
    frozen = False
    v_test = vel  # velocity the stop test integrates while frozen
    for k in range(1, n):
        tk = imu.t[k]
        dt = tk - imu.t[k - 1]
        new_odo = False
        while j + 1 < len(odo_t) and odo_t[j + 1] <= tk:
            j += 1
            new_odo = True
        if frozen and new_odo:
            v_test = np.zeros(3)
        p1, v1, q1 = step(pos, v_test if frozen else vel, q, imu.f[k] - bf, imu.w[k] - bw, dt, earth)
        stopped = (
            cfg.stop_mechanism
            and j >= 0
            and is_stationary(math.sqrt(v1 @ v1), odo_v[j], cfg.v_eps)
        )
        if stopped:
            # hold the solution but keep integrating the test velocity so a
            # start between odometer samples is noticed at once
            vel = np.zeros(3)
            v_test = v1
        else:
            pos, vel, q = p1, v1, q1
        frozen = stopped
        if cfg.rezero_gyro and cfg.stop_mechanism and cfg.bias_removal:
            window.update(tk, stopped, imu.w[k])
            if window.sustained(tk):
                bw = window.gyro_mean()
        pos_out[k], vel_out[k], q_out[k] = pos, vel, q
        stat_out[k] = stopped

    return NavTrack(imu.t.copy(), pos_out, vel_out, attitude_array_from_quat(q_out), stat_out, q_out)
