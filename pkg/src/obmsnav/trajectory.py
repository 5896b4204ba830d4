"""Planar ground-vehicle trajectories: path geometry, speed profile, truth.

A path is a polyline of waypoints (meters, east/north on a plane) whose
corners are rounded by circular arcs. The speed profile is the time-optimal
one under per-zone speed limits and constant acceleration/deceleration
limits, with dwell stops. Both are analytic, so position, velocity and
heading can be evaluated at any time.

Geodetic truth is obtained by integrating the local-level velocity on the
ellipsoid: latitude follows from inverting the meridian arc length and
longitude from a Gauss-Legendre quadrature along the path. The resulting
positions are exactly consistent with the ENU velocities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .frames import WGS84, EarthModel, Geodetic

G0 = 9.80665
MAX_LATERAL_ACCEL = 0.4 * G0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class TrajectoryError(ValueError):
    """Path or speed profile cannot be built as requested."""


@dataclass(frozen=True)
class Primitive:
    s0: float
    length: float
    x0: float
    y0: float
    psi0: float  # azimuth, clockwise from north
    kappa: float  # signed curvature, > 0 turns right
    seg: int  # polyline segment (straights) or the segment before the corner (arcs)
    corner: int | None = None  # waypoint index for arcs


class Path:
    """Straight segments joined by circular arcs at interior waypoints."""

    def __init__(self, waypoints: ArrayLike, turn_radius: float | ArrayLike):
        wp = np.asarray(waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 2:
            raise TrajectoryError("need at least two 2-D waypoints")
        seg = np.diff(wp, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0):
            raise TrajectoryError("consecutive waypoints must differ")
        heading = np.arctan2(seg[:, 0], seg[:, 1])
        n_corner = len(wp) - 2
        radii = np.broadcast_to(np.asarray(turn_radius, dtype=np.float64), (max(n_corner, 1),))
        turn = np.array([_wrap(heading[i + 1] - heading[i]) for i in range(n_corner)])
        if np.any(np.abs(np.abs(turn) - math.pi) < 1e-9):
            raise TrajectoryError("U-turns (180 deg corners) are not supported")
        tangent = np.array([radii[i] * math.tan(abs(turn[i]) / 2.0) for i in range(n_corner)])
        cut_in = np.concatenate([[0.0], tangent])
        cut_out = np.concatenate([tangent, [0.0]])
        straight = lengths - cut_in - cut_out
        if np.any(straight < -1e-9):
            i = int(np.argmin(straight))
            raise TrajectoryError(f"segment {i} too short for its corner fillets")

        prims: list[Primitive] = []
        corner_s = {0: 0.0}
        s = 0.0
        for i in range(len(seg)):
            x0, y0 = wp[i] + cut_in[i] * np.array([math.sin(heading[i]), math.cos(heading[i])])
            L = max(straight[i], 0.0)
            if L > 0:
                prims.append(Primitive(s, L, float(x0), float(y0), float(heading[i]), 0.0, i))
                s += L
            if i < n_corner:
                corner_s[i + 1] = s
            if i < n_corner and abs(turn[i]) > 1e-12:
                xa = x0 + L * math.sin(heading[i])
                ya = y0 + L * math.cos(heading[i])
                kappa = math.copysign(1.0 / radii[i], turn[i])
                arc = radii[i] * abs(turn[i])
                prims.append(Primitive(s, arc, float(xa), float(ya), float(heading[i]), kappa, i, i + 1))
                s += arc
        self.waypoints = wp
        self.primitives = prims
        self.length = s
        self.turn_angles = turn
        self.radii = radii[:n_corner].copy()
        self._s0 = np.array([p.s0 for p in prims])
        # a corner's stop line is the start of its arc (or the waypoint itself)
        corner_s[len(wp) - 1] = s
        self._corner_s = corner_s

    def waypoint_s(self, i: int) -> float:
        """Arc length at which the vehicle reaches waypoint ``i`` (start of its turn)."""
        if i not in self._corner_s:
            raise TrajectoryError(f"no waypoint {i}")
        return self._corner_s[i]

    def arcs(self) -> list[Primitive]:
        return [p for p in self.primitives if p.kappa != 0.0]

    def _index(self, s: NDArray) -> NDArray[np.intp]:
        return np.clip(np.searchsorted(self._s0, s, side="right") - 1, 0, len(self.primitives) - 1)

    def evaluate(self, s: ArrayLike):
        """Planar x, y, heading and curvature at arc lengths ``s``."""
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        idx = self._index(s)
        x = np.empty_like(s)
        y = np.empty_like(s)
        psi = np.empty_like(s)
        kap = np.empty_like(s)
        for j in np.unique(idx):
            p = self.primitives[j]
            m = idx == j
            u = s[m] - p.s0
            if p.kappa == 0.0:
                x[m] = p.x0 + u * math.sin(p.psi0)
                y[m] = p.y0 + u * math.cos(p.psi0)
                psi[m] = p.psi0
            else:
                ang = p.psi0 + p.kappa * u
                x[m] = p.x0 + (math.cos(p.psi0) - np.cos(ang)) / p.kappa
                y[m] = p.y0 + (np.sin(ang) - math.sin(p.psi0)) / p.kappa
                psi[m] = ang
            kap[m] = p.kappa
        return x, y, np.mod(psi, 2.0 * math.pi), kap

    def speed_zones(self, cruise: float | ArrayLike, turn_speed: float | ArrayLike) -> list[tuple[float, float, float]]:
        """(s_start, s_end, v_max) zones: per-segment cruise speed on straights, turn speed on arcs."""
        n_seg = len(self.waypoints) - 1
        cruise = np.broadcast_to(np.asarray(cruise, dtype=np.float64), (n_seg,))
        n_corner = max(len(self.waypoints) - 2, 1)
        vt = np.broadcast_to(np.asarray(turn_speed, dtype=np.float64), (n_corner,))
        zones = []
        for p in self.primitives:
            if p.kappa == 0.0:
                zones.append((p.s0, p.s0 + p.length, float(cruise[p.seg])))
            else:
                v = float(min(vt[p.corner - 1], cruise[p.seg], cruise[p.seg + 1]))
                if v * v * abs(p.kappa) > MAX_LATERAL_ACCEL:
                    raise TrajectoryError(
                        f"turn at waypoint {p.corner}: {v:.1f} m/s on radius {1 / abs(p.kappa):.1f} m "
                        f"exceeds 0.4 g lateral acceleration"
                    )
                zones.append((p.s0, p.s0 + p.length, v))
        return zones


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Phase:
    t0: float
    s0: float
    v0: float
    a: float
    duration: float


class SpeedProfile:
    """Time-optimal speed along a path under zone limits and stops.

    ``v^2(s)`` is the lower envelope of the zone limits and of the
    constant-acceleration ramps leaving/entering every zone boundary and stop,
    so the motion is a sequence of constant-acceleration phases.
    """

    def __init__(
        self,
        length: float,
        zones: list[tuple[float, float, float]],
        stops: list[tuple[float, float]],
        accel: float,
        decel: float,
    ):
        if accel <= 0 or decel <= 0:
            raise TrajectoryError("accel and decel must be > 0")
        stops = sorted(stops)
        if not stops or stops[0][0] > 0.0:
            stops.insert(0, (0.0, 0.0))
        if stops[-1][0] < length:
            stops.append((length, 0.0))
        self.length = length
        self.stops = stops
        vmax = max(z[2] for z in zones)
        cands = []  # (k, c, lo, hi) with v^2 = k s + c on [lo, hi]
        for a, b, v in zones:
            cands.append((0.0, v * v, a, b))
            span1 = (vmax * vmax - v * v) / (2 * accel)
            span2 = (vmax * vmax - v * v) / (2 * decel)
            if span1 > 0:
                cands.append((2 * accel, v * v - 2 * accel * b, b, b + span1))
            if span2 > 0:
                cands.append((-2 * decel, v * v + 2 * decel * a, a - span2, a))
        for sc, _ in stops:
            cands.append((2 * accel, -2 * accel * sc, sc, sc + vmax * vmax / (2 * accel)))
            cands.append((-2 * decel, 2 * decel * sc, sc - vmax * vmax / (2 * decel), sc))
        C = np.array(cands)
        C[:, 2] = np.maximum(C[:, 2], 0.0)
        C[:, 3] = np.minimum(C[:, 3], length)
        C = C[C[:, 3] > C[:, 2]]

        bps = [C[:, 2], C[:, 3]]
        k, c = C[:, 0], C[:, 1]
        dk = k[:, None] - k[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            sx = (c[None, :] - c[:, None]) / dk
        ok = (dk != 0) & np.isfinite(sx)
        ok &= (sx > np.maximum(C[:, None, 2], C[None, :, 2])) & (sx < np.minimum(C[:, None, 3], C[None, :, 3]))
        bps.append(sx[ok])
        bps.append(np.array([sc for sc, _ in stops]))
        grid = np.unique(np.clip(np.concatenate(bps), 0.0, length))
        mids = 0.5 * (grid[:-1] + grid[1:])
        inside = (C[None, :, 2] <= mids[:, None]) & (mids[:, None] <= C[None, :, 3])
        vals = np.where(inside, C[None, :, 0] * mids[:, None] + C[None, :, 1], np.inf)
        best = np.argmin(vals, axis=1)

        # merge runs using the same candidate into pieces
        pieces = []
        i = 0
        while i < len(mids):
            j = i
            while j + 1 < len(mids) and best[j + 1] == best[i]:
                j += 1
            pieces.append((grid[i], grid[j + 1], C[best[i], 0], C[best[i], 1]))
            i = j + 1

        stop_at = {sc: dwell for sc, dwell in stops}
        phases: list[Phase] = []
        t = 0.0
        if stop_at.get(0.0, 0.0) > 0:
            phases.append(Phase(0.0, 0.0, 0.0, 0.0, stop_at[0.0]))
            t = stop_at[0.0]
        for lo, hi, kk, cc in pieces:
            v_lo = math.sqrt(max(kk * lo + cc, 0.0))
            v_hi = math.sqrt(max(kk * hi + cc, 0.0))
            if kk == 0.0:
                dur = (hi - lo) / v_lo
                acc = 0.0
            else:
                acc = kk / 2.0
                dur = (v_hi - v_lo) / acc
            phases.append(Phase(t, lo, v_lo, acc, dur))
            t += dur
            dwell = stop_at.get(hi, 0.0)
            if dwell > 0 and hi < length:
                phases.append(Phase(t, hi, 0.0, 0.0, dwell))
                t += dwell
        if stop_at.get(length, 0.0) > 0:
            phases.append(Phase(t, length, 0.0, 0.0, stop_at[length]))
            t += stop_at[length]
        self.phases = phases
        self.duration = t
        self._t0 = np.array([p.t0 for p in phases])
        self._tab = np.array([(p.s0, p.v0, p.a, p.duration) for p in phases])

    def evaluate(self, t: ArrayLike):
        """Arc length, speed and tangential acceleration at times ``t``."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.clip(np.searchsorted(self._t0, t, side="right") - 1, 0, len(self.phases) - 1)
        s0, v0, a, dur = self._tab[idx].T
        tau = np.clip(t - self._t0[idx], 0.0, dur)
        v = np.maximum(v0 + a * tau, 0.0)
        s = np.minimum(s0 + v0 * tau + 0.5 * a * tau * tau, self.length)
        return s, v, a

    def arrival_time(self, s_target: float) -> float:
        """First time the vehicle reaches arc length ``s_target``."""
        for p in self.phases:
            ds = p.v0 * p.duration + 0.5 * p.a * p.duration**2
            if p.s0 <= s_target <= p.s0 + ds + 1e-9 and (ds > 0 or s_target == p.s0):
                rem = s_target - p.s0
                if p.a == 0.0:
                    return p.t0 + (rem / p.v0 if p.v0 > 0 else 0.0)
                disc = max(p.v0 * p.v0 + 2 * p.a * rem, 0.0)
                return p.t0 + (math.sqrt(disc) - p.v0) / p.a
        raise TrajectoryError(f"arc length {s_target} never reached")


class GeodeticPath:
    """Exact ellipsoidal positions along a planar path at constant height."""

    def __init__(self, path: Path, anchor: Geodetic, earth: EarthModel = WGS84, piece: float = 25.0):
        self.path = path
        self.anchor = Geodetic(*anchor)
        self.earth = earth
        x0, y0, _, _ = path.evaluate(np.array([0.0]))
        self._y0 = float(y0[0])
        # knots on primitive boundaries keep every quadrature piece smooth
        knots = [0.0]
        for p in path.primitives:
            n_pieces = max(1, int(math.ceil(p.length / piece)))
            knots.extend(p.s0 + p.length * np.arange(1, n_pieces + 1) / n_pieces)
        self._knots = np.array(knots)
        inc = self._lon_integral(self._knots[:-1], self._knots[1:])
        self._lon_knots = np.concatenate([[0.0], np.cumsum(inc)])

    def _m(self, lat):
        e2 = self.earth.e2
        return self.earth.a * (1.0 - e2) / (1.0 - e2 * np.sin(lat) ** 2) ** 1.5

    def _n(self, lat):
        return self.earth.a / np.sqrt(1.0 - self.earth.e2 * np.sin(lat) ** 2)

    def _meridian(self, lat):
        """Meridian arc from the anchor latitude, including the height offset."""
        lat0, h = self.anchor.lat, self.anchor.h
        half = 0.5 * (lat - lat0)
        mid = 0.5 * (lat + lat0)
        nodes = mid[..., None] + half[..., None] * _GL_X
        return half * np.sum(_GL_W * (self._m(nodes) + h), axis=-1)

    def latitude(self, s: ArrayLike) -> NDArray[np.float64]:
        _, y, _, _ = self.path.evaluate(s)
        dist = y - self._y0
        lat = self.anchor.lat + dist / (self._m(self.anchor.lat) + self.anchor.h)
        for _ in range(4):
            lat = lat - (self._meridian(lat) - dist) / (self._m(lat) + self.anchor.h)
        return lat

    def _lon_integral(self, lo: NDArray, hi: NDArray) -> NDArray[np.float64]:
        half = 0.5 * (hi - lo)
        nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_X
        flat = nodes.ravel()
        _, _, psi, _ = self.path.evaluate(flat)
        lat = self.latitude(flat)
        g = np.sin(psi) / ((self._n(lat) + self.anchor.h) * np.cos(lat))
        return half * np.sum(_GL_W * g.reshape(nodes.shape), axis=1)

    def longitude(self, s: ArrayLike) -> NDArray[np.float64]:
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.path.length)
        k = np.clip(np.searchsorted(self._knots, s, side="right") - 1, 0, len(self._knots) - 2)
        return self.anchor.lon + self._lon_knots[k] + self._lon_integral(self._knots[k], s)

    def geodetic(self, s: ArrayLike) -> NDArray[np.float64]:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        return np.column_stack([self.latitude(s), self.longitude(s), np.full(s.shape, self.anchor.h)])


@dataclass
class Truth:
    """Reference trajectory sampled on a fixed grid."""

    t: NDArray[np.float64]
    pos: NDArray[np.float64]  # lat, lon, h
    vel: NDArray[np.float64]  # ENU
    att: NDArray[np.float64]  # p, r, a
    q: NDArray[np.float64]
    s: NDArray[np.float64]  # arc length
    speed: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.t)

    def decimate(self, step: int) -> "Truth":
        sl = slice(None, None, step)
        return Truth(self.t[sl], self.pos[sl], self.vel[sl], self.att[sl], self.q[sl], self.s[sl], self.speed[sl])

    def window(self, t0: float, t1: float) -> "Truth":
        m = (self.t >= t0 - 1e-9) & (self.t <= t1 + 1e-9)
        return Truth(self.t[m], self.pos[m], self.vel[m], self.att[m], self.q[m], self.s[m], self.speed[m])


def quat_from_heading(psi: NDArray[np.float64]) -> NDArray[np.float64]:
    """Level attitude with azimuth ``psi``: a rotation of -psi about the up axis."""
    half = -0.5 * np.asarray(psi)
    return np.column_stack([np.cos(half), np.zeros_like(half), np.zeros_like(half), np.sin(half)])


@dataclass
class Trajectory:
    path: Path
    profile: SpeedProfile
    geo: GeodeticPath

    @property
    def duration(self) -> float:
        return self.profile.duration

    def sample(self, rate: float, t_end: float | None = None) -> Truth:
        t_end = self.duration if t_end is None else min(t_end, self.duration)
        n = int(math.floor(t_end * rate + 1e-9)) + 1
        t = np.arange(n) / rate
        return self.at(t)

    def at(self, t: ArrayLike) -> Truth:
        t = np.asarray(t, dtype=np.float64)
        s, v, _ = self.profile.evaluate(t)
        _, _, psi, _ = self.path.evaluate(s)
        pos = self.geo.geodetic(s)
        vel = np.column_stack([v * np.sin(psi), v * np.cos(psi), np.zeros_like(v)])
        att = np.column_stack([np.zeros_like(psi), np.zeros_like(psi), psi])
        return Truth(t, pos, vel, att, quat_from_heading(psi), s, v)


def generate_trajectory(
    waypoints: ArrayLike,
    anchor: Geodetic,
    cruise_speed: float | ArrayLike = 10.0,
    turn_speed: float | ArrayLike = 4.0,
    turn_radius: float | ArrayLike = 10.0,
    stops: list[tuple[int, float]] | None = None,
    accel: float = 1.5,
    decel: float = 2.0,
    initial_dwell: float = 0.0,
    final_dwell: float = 0.0,
    earth: EarthModel = WGS84,
) -> Trajectory:
    """Build a trajectory; ``stops`` are (waypoint index, dwell seconds)."""
    path = Path(waypoints, turn_radius)
    zones = path.speed_zones(cruise_speed, turn_speed)
    stop_list = [(0.0, initial_dwell), (path.length, final_dwell)]
    for idx, dwell in stops or []:
        s = path.waypoint_s(idx)
        stop_list = [st for st in stop_list if abs(st[0] - s) > 1e-9] + [(s, dwell)]
    profile = SpeedProfile(path.length, zones, stop_list, accel, decel)
    return Trajectory(path, profile, GeodeticPath(path, anchor, earth))
