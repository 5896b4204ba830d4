"""5G RTT/DL-AOD positioning: per-BS fixes, NLOS screening, multi-BS fusion.

Angles: the geometry helper ``range_and_angles`` reports the horizontal
angle counterclockwise from east (the x-axis). Measurements and fixes carry
the angle as an azimuth clockwise from north, ``az = pi/2 - ccw``; use
``ccw_to_azimuth`` to move between the two.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .frames import Geodetic, LocalEnu, LocalFrame

log = logging.getLogger(__name__)

DEFAULT_SIGMA_PWR = 3.0  # m, power-derived range
MIN_R2D_FOR_COV = 1.0  # m, keeps the along-bearing variance finite right under a BS


class GeometryError(ValueError):
    """Measurement geometry is impossible or degenerate."""


class LinkState(str, enum.Enum):
    LOS = "LOS"
    NLOS = "NLOS"


class FixMode(str, enum.Enum):
    LOS = "LOS"
    TOTAL_NLOS = "TOTAL_NLOS"


class EpochMode(str, enum.Enum):
    FUSED = "FUSED"
    INS_ONLY = "INS_ONLY"


@dataclass(frozen=True)
class BaseStation:
    id: str
    pos: LocalEnu
    boresight: float = 0.0
    carrier: float = 28e9
    bandwidth: float = 400e6

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "pos": [float(v) for v in self.pos],
            "boresight": self.boresight,
            "carrier": self.carrier,
            "bandwidth": self.bandwidth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaseStation":
        return cls(str(d["id"]), LocalEnu(*map(float, d["pos"])), float(d.get("boresight", 0.0)),
                   float(d.get("carrier", 28e9)), float(d.get("bandwidth", 400e6)))


@dataclass(frozen=True)
class FivegMeasurement:
    t: float
    bs_id: str
    rtt_range: float
    aod: float  # azimuth from north, rad
    rx_power_range: float | None
    sigma_range: float
    sigma_aod: float
    los_truth: bool | None = None  # simulator label, never used by the estimator

    def __post_init__(self) -> None:
        if not self.rtt_range > 0:
            raise ValueError(f"rtt_range must be > 0, got {self.rtt_range}")
        if not (self.sigma_range > 0 and self.sigma_aod > 0):
            raise ValueError("measurement sigmas must be > 0")

    def to_record(self) -> dict:
        rec = {
            "t": self.t,
            "type": "5g",
            "bs": self.bs_id,
            "rtt_range_m": self.rtt_range,
            "aod_rad": self.aod,
            "pwr_range_m": self.rx_power_range,
            "sigma_range_m": self.sigma_range,
            "sigma_aod_rad": self.sigma_aod,
        }
        if self.los_truth is not None:
            rec["los"] = self.los_truth
        return rec

    @classmethod
    def from_record(cls, rec: dict, sigma_range: float = 0.3, sigma_aod: float = math.radians(1.0)) -> "FivegMeasurement":
        pwr = rec.get("pwr_range_m")
        return cls(
            float(rec["t"]),
            str(rec["bs"]),
            float(rec["rtt_range_m"]),
            float(rec["aod_rad"]),
            None if pwr is None else float(pwr),
            float(rec.get("sigma_range_m", sigma_range)),
            float(rec.get("sigma_aod_rad", sigma_aod)),
            rec.get("los"),
        )


@dataclass
class FivegFix:
    t: float
    pos: Geodetic | None
    cov: NDArray[np.float64] | None  # 3x3, m^2, ENU
    n_bs_used: int
    mode: FixMode
    n_bs_visible: int = 0

    @property
    def epoch_mode(self) -> EpochMode:
        return EpochMode.FUSED if self.mode is FixMode.LOS else EpochMode.INS_ONLY


def ccw_to_azimuth(theta_ccw: float) -> float:
    """Counterclockwise-from-east angle to azimuth-from-north in [0, 2pi)."""
    return (math.pi / 2.0 - theta_ccw) % (2.0 * math.pi)


def range_and_angles(ue: LocalEnu, bs: LocalEnu) -> tuple[float, float, float]:
    """Slant range, horizontal angle (ccw from east) and elevation of ``ue`` seen from ``bs``."""
    dx, dy, dz = ue[0] - bs[0], ue[1] - bs[1], ue[2] - bs[2]
    r = math.sqrt(dx * dx + dy * dy + dz * dz)
    if r == 0.0:
        raise GeometryError("UE and BS coincide")
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("UE directly above/below BS: horizontal angle undefined")
    return r, math.atan2(dy, dx), math.asin(dz / r)


def _r2d(m: FivegMeasurement, bs: BaseStation, h_ue: float) -> tuple[float, float]:
    dz = h_ue - bs.pos[2]
    r = m.rtt_range
    if r < abs(dz):
        raise GeometryError(f"range {r:.3f} m shorter than height difference {abs(dz):.3f} m")
    return math.sqrt(r * r - dz * dz), dz


def fix_from_measurement(m: FivegMeasurement, bs: BaseStation, h_ue: float) -> tuple[float, float]:
    """Horizontal UE position from one BS's range and azimuth."""
    r2d, _ = _r2d(m, bs, h_ue)
    return r2d * math.sin(m.aod) + bs.pos[0], r2d * math.cos(m.aod) + bs.pos[1]


def fix_covariance(m: FivegMeasurement, bs: BaseStation, h_ue: float) -> NDArray[np.float64]:
    """First-order 2x2 covariance of ``fix_from_measurement``.

    Range noise acts along the bearing scaled by dr_2D/dr = r/r_2D; angle
    noise acts across it with lever arm r_2D.
    """
    r2d, _ = _r2d(m, bs, h_ue)
    r2d_c = max(r2d, MIN_R2D_FOR_COV)
    s_along = m.sigma_range * m.rtt_range / r2d_c
    s_across = max(r2d, MIN_R2D_FOR_COV) * m.sigma_aod
    u = np.array([math.sin(m.aod), math.cos(m.aod)])
    n = np.array([u[1], -u[0]])
    return s_along**2 * np.outer(u, u) + s_across**2 * np.outer(n, n)


def default_gamma(sigma_range: float, sigma_pwr: float = DEFAULT_SIGMA_PWR) -> float:
    """NLOS threshold: five combined standard deviations of the two range estimates."""
    return 5.0 * math.hypot(sigma_range, sigma_pwr)


def nlos_detect(m: FivegMeasurement, gamma: float, missing_as_los: bool = True) -> LinkState:
    """Compare time-based and power-based ranges; a large gap means NLOS."""
    if m.rx_power_range is None:
        if not missing_as_los:
            return LinkState.NLOS
        log.warning("no power range for BS %s at t=%.3f; treating as LOS", m.bs_id, m.t)
        return LinkState.LOS
    return LinkState.NLOS if abs(m.rtt_range - m.rx_power_range) > gamma else LinkState.LOS


def fuse_multibs(
    fixes: Sequence[tuple[float, float, NDArray[np.float64]]],
) -> tuple[NDArray[np.float64], NDArray[np.float64]] | None:
    """Information-weighted fusion of per-BS horizontal fixes.

    Returns ``(mean, cov)`` or ``None`` for an empty list. Input order does
    not matter beyond floating point summation order.
    """
    if not fixes:
        return None
    if len(fixes) == 1:
        x, y, c = fixes[0]
        return np.array([x, y], dtype=np.float64), np.array(c, dtype=np.float64)
    info = np.zeros((2, 2))
    vec = np.zeros(2)
    for x, y, c in fixes:
        ci = np.linalg.inv(c)
        info += ci
        vec += ci @ np.array([x, y])
    cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.T)
    return cov @ vec, cov


def switch_mode(states: Iterable[LinkState]) -> EpochMode:
    """INS_ONLY when no BS at the epoch is in line of sight."""
    return EpochMode.FUSED if any(s is LinkState.LOS for s in states) else EpochMode.INS_ONLY


@dataclass
class FivegProcessor:
    """Turns raw per-BS measurements into one ``FivegFix`` per epoch.

    ``h_ue`` is the UE height in ``frame`` (up coordinate, like the BS
    positions). ``gamma=None`` derives the NLOS threshold per measurement
    from its range sigma via ``default_gamma``.
    """

    stations: dict[str, BaseStation]
    frame: LocalFrame
    h_ue: float
    gamma: float | None = None
    sigma_pwr: float = DEFAULT_SIGMA_PWR
    sigma_h: float = 0.1
    missing_as_los: bool = True
    rejected: int = field(default=0, init=False)

    def classify(self, m: FivegMeasurement) -> LinkState:
        gamma = self.gamma if self.gamma is not None else default_gamma(m.sigma_range, self.sigma_pwr)
        return nlos_detect(m, gamma, self.missing_as_los)

    def process_epoch(self, t: float, meas: Sequence[FivegMeasurement]) -> FivegFix:
        fixes = []
        for m in meas:
            if self.classify(m) is not LinkState.LOS:
                continue
            bs = self.stations.get(m.bs_id)
            if bs is None:
                raise KeyError(f"unknown base station {m.bs_id!r}")
            try:
                x, y = fix_from_measurement(m, bs, self.h_ue)
                fixes.append((x, y, fix_covariance(m, bs, self.h_ue)))
            except GeometryError as exc:
                self.rejected += 1
                log.warning("t=%.3f BS %s rejected: %s", t, m.bs_id, exc)
        fused = fuse_multibs(fixes)
        if fused is None:
            return FivegFix(t, None, None, 0, FixMode.TOTAL_NLOS, len(meas))
        mean, cov2 = fused
        pos = self.frame.to_geodetic(LocalEnu(mean[0], mean[1], self.h_ue))
        cov = np.zeros((3, 3))
        cov[:2, :2] = cov2
        cov[2, 2] = self.sigma_h**2
        return FivegFix(t, pos, cov, len(fixes), FixMode.LOS, len(meas))

    def process(self, meas: Iterable[FivegMeasurement]) -> list[FivegFix]:
        """Group measurements by timestamp (input must be time-ordered)."""
        out: list[FivegFix] = []
        batch: list[FivegMeasurement] = []
        for m in meas:
            if batch and m.t != batch[0].t:
                if m.t < batch[0].t:
                    raise ValueError(f"5G measurements out of order at t={m.t}")
                out.append(self.process_epoch(batch[0].t, batch))
                batch = []
            batch.append(m)
        if batch:
            out.append(self.process_epoch(batch[0].t, batch))
        return out


def fix_stream_hash(fixes: Iterable[FivegFix]) -> str:
    """SHA-256 over the exact bytes of a fix stream (times, positions, covariances, modes)."""
    h = hashlib.sha256()
    for f in fixes:
        h.update(np.float64(f.t).tobytes())
        h.update(f.mode.value.encode())
        if f.pos is not None:
            h.update(np.asarray(f.pos, dtype=np.float64).tobytes())
            h.update(np.ascontiguousarray(f.cov, dtype=np.float64).tobytes())
    return h.hexdigest()
