"""Coordinate frames, Earth model, rotations and quaternion algebra.

Conventions used throughout the package:

* body frame (b): x lateral-right, y forward, z up
* local-level frame (l): east, north, up (ENU)
* attitude: pitch ``p``, roll ``r``, azimuth ``a`` (clockwise from north)
* quaternions are scalar-first ``(w, x, y, z)`` and rotate body vectors into
  the local-level frame
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

TWO_PI = 2.0 * math.pi
GIMBAL_LOCK_TOL = 1e-6


class GimbalLockError(ValueError):
    """Raised when pitch is too close to +-90 deg for a unique roll/azimuth."""


class OutOfRangeError(ValueError):
    """Raised when a point is too far from the local frame anchor."""


class Geodetic(NamedTuple):
    lat: float  # rad
    lon: float  # rad
    h: float  # m, ellipsoidal


class LocalEnu(NamedTuple):
    e: float
    n: float
    u: float


class Attitude(NamedTuple):
    p: float  # pitch, rad
    r: float  # roll, rad
    a: float  # azimuth, rad in [0, 2pi)


@dataclass(frozen=True)
class EarthModel:
    """Reference ellipsoid, rotation rate and normal gravity.

    Defaults are WGS-84. Gravity uses the Somigliana closed form with a
    linear free-air correction.
    """

    a: float = 6378137.0
    e2: float = 6.69437999014e-3
    omega_e: float = 7.292115e-5
    g_equator: float = 9.7803253359
    g_k: float = 1.93185265241e-3
    free_air: float = 3.086e-6

    def radii(self, lat: float) -> tuple[float, float]:
        """Meridional (M) and prime-vertical (N) radii of curvature."""
        s2 = math.sin(lat) ** 2
        den = 1.0 - self.e2 * s2
        n = self.a / math.sqrt(den)
        m = self.a * (1.0 - self.e2) / den**1.5
        return m, n

    def gravity(self, lat: float, h: float = 0.0) -> float:
        s2 = math.sin(lat) ** 2
        g0 = self.g_equator * (1.0 + self.g_k * s2) / math.sqrt(1.0 - self.e2 * s2)
        return g0 - self.free_air * h

    def earth_rate_l(self, lat: float) -> NDArray[np.float64]:
        return np.array([0.0, self.omega_e * math.cos(lat), self.omega_e * math.sin(lat)])


WGS84 = EarthModel()


def radii(lat: float, earth: EarthModel = WGS84) -> tuple[float, float]:
    return earth.radii(lat)


def wrap_two_pi(angle: float) -> float:
    """Wrap an angle to [0, 2pi)."""
    w = math.fmod(angle, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2pi
    return 0.0 if w >= TWO_PI else w


def wrap_pi(angle: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (angle + math.pi) % TWO_PI - math.pi


def skew(v: ArrayLike) -> NDArray[np.float64]:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_body_to_local(att: Attitude | ArrayLike) -> NDArray[np.float64]:
    """Direction cosine matrix R_b^l for an attitude (pitch, roll, azimuth).

    Equivalent to ``Rz(-a) @ Rx(p) @ Ry(r)``; the second column is the
    forward axis ``[sin a cos p, cos a cos p, sin p]``.
    """
    p, r, a = att
    sp, cp = math.sin(p), math.cos(p)
    sr, cr = math.sin(r), math.cos(r)
    sa, ca = math.sin(a), math.cos(a)
    return np.array(
        [
            [ca * cr + sa * sp * sr, sa * cp, ca * sr - sa * sp * cr],
            [-sa * cr + ca * sp * sr, ca * cp, -sa * sr - ca * sp * cr],
            [-cp * sr, sp, cp * cr],
        ]
    )


def attitude_from_dcm(R: NDArray[np.float64]) -> Attitude:
    s = R[2, 1]
    if abs(abs(s) - 1.0) < GIMBAL_LOCK_TOL**2 / 2.0 or abs(s) >= 1.0:
        raise GimbalLockError(f"pitch at gimbal lock (sin p = {s!r})")
    p = math.asin(s)
    if abs(abs(p) - math.pi / 2.0) < GIMBAL_LOCK_TOL:
        raise GimbalLockError(f"pitch {p!r} within {GIMBAL_LOCK_TOL} rad of +-pi/2")
    r = math.atan2(-R[2, 0], R[2, 2])
    a = wrap_two_pi(math.atan2(R[0, 1], R[1, 1]))
    return Attitude(p, r, a)


def dcm_from_quat(q: ArrayLike) -> NDArray[np.float64]:
    w, x, y, z = q
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def quat_from_dcm(R: NDArray[np.float64]) -> NDArray[np.float64]:
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    cands = (tr, R[0, 0], R[1, 1], R[2, 2])
    i = int(np.argmax(cands))
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
    q = np.asarray(q)
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_from_attitude(att: Attitude | ArrayLike) -> NDArray[np.float64]:
    return quat_from_dcm(rotation_body_to_local(att))


def attitude_from_quat(q: ArrayLike) -> Attitude:
    return attitude_from_dcm(dcm_from_quat(q))


def quat_multiply(q1: ArrayLike, q2: ArrayLike) -> NDArray[np.float64]:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_normalize(q: ArrayLike) -> NDArray[np.float64]:
    q = np.asarray(q, dtype=np.float64)
    return q / math.sqrt(float(q @ q))


class LocalFrame:
    """Linearized local grid anchored at a geodetic point.

    East and north are scaled latitude/longitude offsets using the radii of
    curvature at the anchor, up is the ellipsoidal height offset. The mapping
    is affine, so conversions round trip to floating point precision and a
    constant-height vehicle has a constant ``u``.
    """

    def __init__(self, anchor: Geodetic, earth: EarthModel = WGS84, max_range: float = 50e3):
        self.anchor = Geodetic(*anchor)
        self.earth = earth
        self.max_range = max_range
        m, n = earth.radii(self.anchor.lat)
        self._m_h = m + self.anchor.h
        self._n_h_cos = (n + self.anchor.h) * math.cos(self.anchor.lat)

    def _check(self, e: float, n: float) -> None:
        if self.max_range is not None and math.hypot(e, n) >= self.max_range:
            raise OutOfRangeError(
                f"point {math.hypot(e, n):.0f} m from anchor exceeds {self.max_range:.0f} m"
            )

    def to_local(self, p: Geodetic) -> LocalEnu:
        lat, lon, h = p
        e = wrap_pi(lon - self.anchor.lon) * self._n_h_cos
        n = (lat - self.anchor.lat) * self._m_h
        self._check(e, n)
        return LocalEnu(e, n, h - self.anchor.h)

    def to_geodetic(self, p: LocalEnu) -> Geodetic:
        e, n, u = p
        self._check(e, n)
        lon = wrap_pi(self.anchor.lon + e / self._n_h_cos)
        if lon == -math.pi:
            lon = math.pi
        return Geodetic(self.anchor.lat + n / self._m_h, lon, self.anchor.h + u)

    def to_local_array(self, lat, lon, h) -> NDArray[np.float64]:
        """Vectorized ``to_local``; returns an (n, 3) array of e, n, u."""
        lat, lon, h = (np.asarray(v, dtype=np.float64) for v in (lat, lon, h))
        dlon = (lon - self.anchor.lon + math.pi) % TWO_PI - math.pi
        return np.column_stack(
            [dlon * self._n_h_cos, (lat - self.anchor.lat) * self._m_h, h - self.anchor.h]
        )

    def to_geodetic_array(self, enu: ArrayLike) -> NDArray[np.float64]:
        enu = np.atleast_2d(np.asarray(enu, dtype=np.float64))
        lat = self.anchor.lat + enu[:, 1] / self._m_h
        lon = self.anchor.lon + enu[:, 0] / self._n_h_cos
        return np.column_stack([lat, lon, self.anchor.h + enu[:, 2]])

    def scale(self) -> tuple[float, float]:
        """Meters per radian of (latitude, longitude) at the anchor."""
        return self._m_h, self._n_h_cos


def geodetic_to_local(p: Geodetic, anchor: Geodetic, earth: EarthModel = WGS84) -> LocalEnu:
    return LocalFrame(anchor, earth).to_local(p)


def local_to_geodetic(p: LocalEnu, anchor: Geodetic, earth: EarthModel = WGS84) -> Geodetic:
    return LocalFrame(anchor, earth).to_geodetic(p)
