"""Synthetic scenarios: truth trajectory, IMU/odometer streams, base stations, 5G.

Everything here is deterministic given the scenario's seed. Independent
random streams (IMU, odometer, 5G noise, blockage) are spawned from one
``numpy.random.SeedSequence`` so that changing one stream's consumption does
not perturb the others.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any

import numpy as np
import yaml
from numpy.typing import NDArray
from scipy.signal import lfilter

from .fiveg import BaseStation, FivegMeasurement, ccw_to_azimuth, range_and_angles
from .frames import WGS84, EarthModel, Geodetic, LocalEnu, LocalFrame
from .mechanization import ImuStream, OdoStream
from .sensors import BiasState, SensorSpec
from .trajectory import Trajectory, TrajectoryError, Truth, generate_trajectory


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# configuration tree


@dataclass
class RouteConfig:
    waypoints: list[list[float]]
    cruise_speed: float | list[float] = 10.0
    turn_speed: float | list[float] = 4.0
    turn_radius: float | list[float] = 10.0
    accel: float = 1.5
    decel: float = 2.0
    stops: list[dict] = field(default_factory=list)  # {"waypoint": i, "duration": s}
    initial_dwell: float = 60.0
    final_dwell: float = 10.0


@dataclass
class RatesConfig:
    imu: float = 20.0
    odo: float = 1.0
    fiveg: float = 5.0
    truth: float = 5.0


@dataclass
class OdometerConfig:
    resolution: float = 0.1
    noise_std: float = 0.02


@dataclass
class FivegConfig:
    sigma_range: float = 0.3
    sigma_aod_deg: float = 1.0
    sigma_pwr: float = 3.0
    sigma_h: float = 0.1
    nlos_excess: float = 50.0
    gamma: float | None = None
    max_range: float = 300.0
    max_bs: int = 3
    spacing: float = 250.0
    lateral_offset: float = 15.0
    alternate_sides: bool = True
    bs_height: float = 10.0
    ue_height: float = 0.0
    blockage_fraction: float = 0.0
    blockage_mean_duration: float = 4.0


@dataclass
class OutageConfig:
    duration: float
    start: float | None = None
    waypoint: int | None = None
    lead: float = 0.0


@dataclass
class Scenario:
    route: RouteConfig
    name: str = "scenario"
    seed: int = 0
    anchor: dict = field(default_factory=lambda: {"lat_deg": 43.65, "lon_deg": -79.38, "h": 80.0})
    rates: RatesConfig = field(default_factory=RatesConfig)
    sensors: SensorSpec = field(default_factory=SensorSpec)
    bias_truth: BiasState = field(default_factory=BiasState)
    odometer: OdometerConfig = field(default_factory=OdometerConfig)
    fiveg: FivegConfig = field(default_factory=FivegConfig)
    outages: list[OutageConfig] = field(default_factory=list)
    align_duration: float = 60.0
    noise_free: bool = False

    @property
    def anchor_geodetic(self) -> Geodetic:
        a = self.anchor
        return Geodetic(math.radians(a["lat_deg"]), math.radians(a["lon_deg"]), float(a["h"]))

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "seed": self.seed,
            "anchor": dict(self.anchor),
            "route": dataclasses.asdict(self.route),
            "rates": dataclasses.asdict(self.rates),
            "sensors": self.sensors.to_dict(),
            "bias_truth": {"gyro": self.bias_truth.gyro.tolist(), "accel": self.bias_truth.accel.tolist()},
            "odometer": dataclasses.asdict(self.odometer),
            "fiveg": dataclasses.asdict(self.fiveg),
            "outages": [dataclasses.asdict(o) for o in self.outages],
            "align_duration": self.align_duration,
            "noise_free": self.noise_free,
        }
        return d

    @classmethod
    def from_dict(cls, d: Any) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigError("scenario: expected a mapping at the top level")
        _reject_unknown(d, {f.name for f in dataclasses.fields(cls)}, "scenario")
        if "route" not in d:
            raise ConfigError("scenario.route: missing required field")
        route = _build(RouteConfig, d["route"], "scenario.route")
        if not isinstance(route.waypoints, list) or len(route.waypoints) < 2:
            raise ConfigError("scenario.route.waypoints: need a list of at least two [east, north] points")
        try:
            sensors = SensorSpec.from_dict(d.get("sensors", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario.sensors: {exc}") from None
        bt = d.get("bias_truth", {})
        _reject_unknown(bt, {"gyro", "accel"}, "scenario.bias_truth")
        anchor = d.get("anchor", {"lat_deg": 43.65, "lon_deg": -79.38, "h": 80.0})
        _reject_unknown(anchor, {"lat_deg", "lon_deg", "h"}, "scenario.anchor")
        for key in ("lat_deg", "lon_deg", "h"):
            if key not in anchor:
                raise ConfigError(f"scenario.anchor.{key}: missing required field")
        outages = [_build(OutageConfig, o, f"scenario.outages[{i}]") for i, o in enumerate(d.get("outages", []))]
        sc = cls(
            route=route,
            name=str(d.get("name", "scenario")),
            seed=int(d.get("seed", 0)),
            anchor={k: float(v) for k, v in anchor.items()},
            rates=_build(RatesConfig, d.get("rates", {}), "scenario.rates"),
            sensors=sensors,
            bias_truth=BiasState(bt.get("gyro", 0.0), bt.get("accel", 0.0)),
            odometer=_build(OdometerConfig, d.get("odometer", {}), "scenario.odometer"),
            fiveg=_build(FivegConfig, d.get("fiveg", {}), "scenario.fiveg"),
            outages=outages,
            align_duration=float(d.get("align_duration", 60.0)),
            noise_free=bool(d.get("noise_free", False)),
        )
        sc.validate()
        return sc

    def validate(self) -> None:
        for name in ("imu", "odo", "fiveg", "truth"):
            if not getattr(self.rates, name) > 0:
                raise ConfigError(f"scenario.rates.{name}: must be > 0")
        step = self.rates.imu / self.rates.truth
        if abs(step - round(step)) > 1e-9:
            raise ConfigError("scenario.rates.truth: IMU rate must be an integer multiple of it")
        try:
            self.sensors.validate(allow_zero=self.noise_free)
        except ValueError as exc:
            raise ConfigError(f"scenario.sensors: {exc}") from None
        f = self.fiveg
        for name in ("sigma_range", "sigma_aod_deg", "sigma_pwr", "sigma_h", "spacing", "max_range"):
            if not getattr(f, name) > 0:
                raise ConfigError(f"scenario.fiveg.{name}: must be > 0")
        if not 0.0 <= f.blockage_fraction < 1.0:
            raise ConfigError("scenario.fiveg.blockage_fraction: must be in [0, 1)")
        if f.max_bs < 1:
            raise ConfigError("scenario.fiveg.max_bs: must be >= 1")
        for i, o in enumerate(self.outages):
            if not o.duration > 0:
                raise ConfigError(f"scenario.outages[{i}].duration: must be > 0")
            if (o.start is None) == (o.waypoint is None):
                raise ConfigError(f"scenario.outages[{i}]: give exactly one of start or waypoint")
        if self.odometer.resolution < 0 or self.odometer.noise_std < 0:
            raise ConfigError("scenario.odometer: resolution and noise_std must be >= 0")


def _reject_unknown(d: Any, known: set[str], where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field")


def _build(cls, d: Any, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    _reject_unknown(d, names, where)
    required = [
        f.name
        for f in dataclasses.fields(cls)
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    ]
    for name in required:
        if name not in d:
            raise ConfigError(f"{where}.{name}: missing required field")
    return cls(**copy.deepcopy(d))


def load_scenario(path: str | FsPath) -> Scenario:
    """Read a scenario from YAML or JSON."""
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read scenario file: {exc}") from None
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from None
    return Scenario.from_dict(data)


def save_scenario(sc: Scenario, path: str | FsPath) -> None:
    path = FsPath(path)
    d = sc.to_dict()
    if path.suffix == ".json":
        path.write_text(json.dumps(d, indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(d, sort_keys=False))


# ---------------------------------------------------------------------------
# truth and inertial streams


def build_trajectory(sc: Scenario, earth: EarthModel = WGS84) -> Trajectory:
    r = sc.route
    try:
        return generate_trajectory(
            r.waypoints,
            sc.anchor_geodetic,
            cruise_speed=r.cruise_speed,
            turn_speed=r.turn_speed,
            turn_radius=r.turn_radius,
            stops=[(int(s["waypoint"]), float(s["duration"])) for s in r.stops],
            accel=r.accel,
            decel=r.decel,
            initial_dwell=r.initial_dwell,
            final_dwell=r.final_dwell,
            earth=earth,
        )
    except (TrajectoryError, KeyError, TypeError) as exc:
        raise ConfigError(f"scenario.route: {exc}") from None


def _dcm_batch(q: NDArray) -> NDArray:
    w, x, y, z = q.T
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def _quat_mul_batch(a: NDArray, b: NDArray) -> NDArray:
    w1, x1, y1, z1 = a.T
    w2, x2, y2, z2 = b.T
    return np.column_stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def _earth_terms_batch(pos: NDArray, vel: NDArray, earth: EarthModel):
    lat, h = pos[:, 0], pos[:, 2]
    s2 = np.sin(lat) ** 2
    den = 1.0 - earth.e2 * s2
    N = earth.a / np.sqrt(den)
    M = earth.a * (1.0 - earth.e2) / den**1.5
    g = earth.g_equator * (1.0 + earth.g_k * s2) / np.sqrt(den) - earth.free_air * h
    w_ie = np.column_stack([np.zeros_like(lat), earth.omega_e * np.cos(lat), earth.omega_e * np.sin(lat)])
    w_el = np.column_stack(
        [-vel[:, 1] / (M + h), vel[:, 0] / (N + h), vel[:, 0] * np.tan(lat) / (N + h)]
    )
    return w_ie, w_el, g


def inverse_mechanize(truth: Truth, earth: EarthModel = WGS84) -> ImuStream:
    """Error-free IMU samples that reproduce ``truth`` through ``mechanize``.

    Sample ``k`` is the mean body rate and specific force over
    ``(t_{k-1}, t_k]`` as delivered by an increment-output IMU: the rotation
    increment comes from consecutive attitudes, the velocity increment from
    consecutive velocities, both expressed in the body frame at ``t_k``.
    Earth-rate, transport-rate, Coriolis and gravity terms are averaged over
    the interval with the trapezoid rule. Sample 0 holds the instantaneous
    values at ``t_0``.
    """
    t, q, vel = truth.t, truth.q, truth.vel
    n = len(t)
    R = _dcm_batch(q)
    Rt = np.transpose(R, (0, 2, 1))
    w_ie, w_el, g = _earth_terms_batch(truth.pos, vel, earth)
    w_il_b = np.einsum("kij,kj->ki", Rt, w_ie + w_el)
    cor = np.cross(2.0 * w_ie + w_el, vel)
    c = cor.copy()
    c[:, 2] += g  # (2 w_ie + w_el) x v - g_l with g_l = (0, 0, -g)

    w_b = np.empty((n, 3))
    f_b = np.empty((n, 3))
    w_b[0] = w_il_b[0]
    f_b[0] = Rt[0] @ c[0]
    if n > 1:
        dt = np.diff(t)[:, None]
        dq = _quat_mul_batch(q[:-1] * np.array([1.0, -1.0, -1.0, -1.0]), q[1:])
        dq[dq[:, 0] < 0] *= -1.0
        vn = np.linalg.norm(dq[:, 1:], axis=1)
        ang = 2.0 * np.arctan2(vn, dq[:, 0])
        scale = np.where(vn > 0, ang / np.where(vn > 0, vn, 1.0), 2.0)
        rotvec = dq[:, 1:] * scale[:, None]
        w_b[1:] = rotvec / dt + 0.5 * (w_il_b[:-1] + w_il_b[1:])
        f_l = np.diff(vel, axis=0) / dt + 0.5 * (c[:-1] + c[1:])
        f_b[1:] = np.einsum("kij,kj->ki", Rt[1:], f_l)
    return ImuStream(t.copy(), f_b, w_b)


def corrupt_imu(
    imu: ImuStream, spec: SensorSpec, bias: BiasState, rng: np.random.Generator
) -> tuple[ImuStream, NDArray[np.float64]]:
    """Add Gauss-Markov biases (starting at ``bias``) and white noise.

    Returns the corrupted stream and the (n, 6) true bias history. Assumes a
    uniform sampling interval.
    """
    n = len(imu)
    dt = float(np.median(np.diff(imu.t))) if n > 1 else 1.0
    beta = spec.beta
    if np.any(beta * dt >= 1.0):
        raise ConfigError("scenario.sensors: beta * dt must be < 1")
    a = 1.0 - beta * dt
    drive = np.sqrt(2.0 * beta * spec.bias_var * dt)
    u = rng.standard_normal((n, 6)) * drive
    u[0] = 0.0
    b0 = bias.as_vector()
    hist = np.empty((n, 6))
    for i in range(6):
        hist[:, i], _ = lfilter([1.0], [1.0, -a[i]], u[:, i], zi=[b0[i]])
    noise = rng.standard_normal((n, 6)) * np.sqrt(np.concatenate([spec.gyro_noise_var, spec.accel_noise_var]))
    w = imu.w + hist[:, :3] + noise[:, :3]
    f = imu.f + hist[:, 3:] + noise[:, 3:]
    return ImuStream(imu.t.copy(), f, w), hist


def quantize_odometer(v: NDArray[np.float64], resolution: float) -> NDArray[np.float64]:
    """Round to the odometer resolution; anything below one count reads zero."""
    v = np.asarray(v, dtype=np.float64)
    if resolution <= 0:
        return np.maximum(v, 0.0)
    out = np.round(v / resolution) * resolution
    out[v < resolution] = 0.0
    return out


def corrupt_odometer(
    t: NDArray[np.float64], speed: NDArray[np.float64], cfg: OdometerConfig, rng: np.random.Generator
) -> OdoStream:
    v = speed + rng.standard_normal(len(speed)) * cfg.noise_std
    return OdoStream(np.asarray(t, dtype=np.float64).copy(), quantize_odometer(v, cfg.resolution))


def corrupt(
    imu: ImuStream,
    odo_t: NDArray[np.float64],
    odo_speed: NDArray[np.float64],
    spec: SensorSpec,
    bias: BiasState,
    odo_cfg: OdometerConfig,
    seed: int,
) -> tuple[ImuStream, OdoStream]:
    """Corrupt perfect IMU and odometer streams with seeded sensor errors."""
    s_imu, s_odo = np.random.SeedSequence(seed).spawn(2)
    noisy, _ = corrupt_imu(imu, spec, bias, np.random.default_rng(s_imu))
    return noisy, corrupt_odometer(odo_t, odo_speed, odo_cfg, np.random.default_rng(s_odo))


# ---------------------------------------------------------------------------
# base stations and 5G


def _grid_times(rate: float, duration: float) -> NDArray[np.float64]:
    n = int(math.floor(duration * rate + 1e-9)) + 1
    return np.arange(n) / rate


def deploy_bs(
    traj: Trajectory,
    frame: LocalFrame,
    spacing: float,
    lateral_offset: float = 15.0,
    height: float = 10.0,
    alternate_sides: bool = True,
) -> list[BaseStation]:
    """Sites every ``spacing`` m of arc length (plus the end point), offset sideways.

    Positive offsets are to the right of the direction of travel. A site
    closer than ``spacing / 5`` to an existing one (a closed loop's end) is
    skipped.
    """
    if not spacing > 0:
        raise ValueError("spacing must be > 0")
    L = traj.path.length
    s = list(np.arange(0.0, L + 1e-9, spacing))
    if L - s[-1] > 1e-6:
        s.append(L)
    s = np.array(s)
    geo = traj.geo.geodetic(s)
    enu = frame.to_local_array(geo[:, 0], geo[:, 1], geo[:, 2])
    _, _, psi, _ = traj.path.evaluate(s)
    out: list[BaseStation] = []
    kept = []
    for i in range(len(s)):
        side = -1.0 if (alternate_sides and i % 2) else 1.0
        off = side * lateral_offset
        e = enu[i, 0] + off * math.cos(psi[i])
        n = enu[i, 1] - off * math.sin(psi[i])
        if any(math.hypot(e - a, n - b) < spacing / 5.0 for a, b in kept):
            continue
        kept.append((e, n))
        out.append(BaseStation(f"bs{len(out):03d}", LocalEnu(e, n, height)))
    return out


def resolve_outages(sc: Scenario, traj: Trajectory) -> list[tuple[float, float]]:
    """Absolute (start, duration) windows, sorted; waypoint outages start ``lead`` s before arrival."""
    out = []
    for i, o in enumerate(sc.outages):
        if o.start is not None:
            t0 = float(o.start)
        else:
            try:
                t0 = traj.profile.arrival_time(traj.path.waypoint_s(o.waypoint)) - o.lead
            except TrajectoryError as exc:
                raise ConfigError(f"scenario.outages[{i}].waypoint: {exc}") from None
        if t0 < 0 or t0 + o.duration > traj.duration:
            raise ConfigError(f"scenario.outages[{i}]: window outside the trajectory")
        out.append((t0, float(o.duration)))
    out.sort()
    for (a, da), (b, _) in zip(out, out[1:]):
        if a + da > b:
            raise ConfigError("scenario.outages: windows overlap")
    return out


def in_windows(t: NDArray[np.float64], windows: list[tuple[float, float]]) -> NDArray[np.bool_]:
    t = np.asarray(t, dtype=np.float64)
    m = np.zeros(t.shape, dtype=bool)
    for t0, d in windows:
        m |= (t >= t0) & (t <= t0 + d)
    return m


def synthesize_5g(
    truth: Truth,
    stations: list[BaseStation],
    frame: LocalFrame,
    outages: list[tuple[float, float]],
    cfg: FivegConfig,
    seed: int,
    noise_free: bool = False,
) -> list[FivegMeasurement]:
    """RTT range, azimuth AOD and power-based range for each visible BS.

    Visible BSs are those within ``max_range``; the ``max_bs`` nearest are
    measured. Outside outages a BS may be blocked by a two-state Markov
    process with mean NLOS fraction ``blockage_fraction``, but at least one
    measured BS stays LOS. Inside outages every BS is NLOS. An NLOS link
    adds ``nlos_excess`` to the power-based range.
    """
    rng_noise, rng_block = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    sig_aod = math.radians(cfg.sigma_aod_deg)
    bs_xyz = np.array([b.pos for b in stations])
    ue = frame.to_local_array(truth.pos[:, 0], truth.pos[:, 1], truth.pos[:, 2])
    ue[:, 2] = cfg.ue_height
    outage = in_windows(truth.t, outages)
    dt = float(np.median(np.diff(truth.t))) if len(truth) > 1 else 1.0
    f = cfg.blockage_fraction
    if f > 0:
        p_end = min(dt / cfg.blockage_mean_duration, 1.0)  # NLOS -> LOS
        p_start = min(p_end * f / (1.0 - f), 1.0)  # LOS -> NLOS
    else:
        p_end, p_start = 1.0, 0.0
    blocked = rng_block.random(len(stations)) < f

    out: list[FivegMeasurement] = []
    for k in range(len(truth)):
        u = rng_block.random(len(stations))
        blocked = np.where(blocked, u >= p_end, u < p_start)
        d = np.linalg.norm(bs_xyz - ue[k], axis=1)
        vis = np.flatnonzero(d <= cfg.max_range)
        vis = vis[np.argsort(d[vis], kind="stable")][: cfg.max_bs]
        if len(vis) == 0:
            continue
        nlos = blocked[vis].copy()
        if outage[k]:
            nlos[:] = True
        elif nlos.all():
            nlos[0] = False
            blocked[vis[0]] = False
        noise = rng_noise.standard_normal((len(vis), 3))
        if noise_free:
            noise[:] = 0.0
        for j, i in enumerate(vis):
            r, th, _ = range_and_angles(LocalEnu(*ue[k]), stations[i].pos)
            rtt = r + cfg.sigma_range * noise[j, 0]
            aod = (ccw_to_azimuth(th) + sig_aod * noise[j, 1]) % (2.0 * math.pi)
            pwr = r + cfg.sigma_pwr * noise[j, 2] + (cfg.nlos_excess if nlos[j] else 0.0)
            out.append(
                FivegMeasurement(
                    float(truth.t[k]), stations[i].id, max(rtt, 1e-3), aod, pwr,
                    cfg.sigma_range, sig_aod, bool(not nlos[j]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# end-to-end simulation


@dataclass
class Simulation:
    scenario: Scenario
    trajectory: Trajectory
    frame: LocalFrame
    truth: Truth  # at the IMU rate
    imu: ImuStream
    imu_perfect: ImuStream
    odo: OdoStream
    measurements: list[FivegMeasurement]
    stations: list[BaseStation]
    outages: list[tuple[float, float]]
    bias_history: NDArray[np.float64]

    @property
    def h_ue(self) -> float:
        """UE height in the local frame."""
        return self.scenario.fiveg.ue_height


def simulate(sc: Scenario, earth: EarthModel = WGS84) -> Simulation:
    sc.validate()
    traj = build_trajectory(sc, earth)
    frame = LocalFrame(sc.anchor_geodetic, earth, max_range=None)
    truth = traj.sample(sc.rates.imu)
    perfect = inverse_mechanize(truth, earth)
    s_imu, s_odo, s_5g = np.random.SeedSequence(sc.seed).spawn(3)
    odo_t = _grid_times(sc.rates.odo, traj.duration)
    _, odo_speed, _ = traj.profile.evaluate(odo_t)
    if sc.noise_free:
        zero = SensorSpec(*(np.zeros(3) for _ in range(4)), sc.sensors.beta_gyro, sc.sensors.beta_accel,
                          sc.sensors.odo_vel_var)
        imu, hist = corrupt_imu(perfect, zero, BiasState(), np.random.default_rng(s_imu))
        odo = corrupt_odometer(odo_t, odo_speed, OdometerConfig(0.0, 0.0),
                               np.random.default_rng(s_odo))
    else:
        imu, hist = corrupt_imu(perfect, sc.sensors, sc.bias_truth, np.random.default_rng(s_imu))
        odo = corrupt_odometer(odo_t, odo_speed, sc.odometer, np.random.default_rng(s_odo))
    stations = deploy_bs(
        traj, frame, sc.fiveg.spacing, sc.fiveg.lateral_offset, sc.fiveg.bs_height, sc.fiveg.alternate_sides
    )
    outages = resolve_outages(sc, traj)
    t5 = _grid_times(sc.rates.fiveg, traj.duration)
    meas = synthesize_5g(traj.at(t5), stations, frame, outages, sc.fiveg, int(s_5g.generate_state(1)[0]),
                         sc.noise_free)
    return Simulation(sc, traj, frame, truth, imu, perfect, odo, meas, stations, outages, hist)


# ---------------------------------------------------------------------------
# shipped reference scenario


def _reference_route() -> tuple[list[list[float]], list[float], list[dict], list[int]]:
    """A ~9 km serpentine loop through a 400 m street grid with 200 m blocks."""
    legs = [  # (dx, dy) of each street leg
        (-1500, 0), (0, 400), (1500, 0), (0, 400), (-1500, 0), (0, 400), (1900, 0), (0, -1200), (-400, 0),
    ]
    cruise_by_leg = [9.0, 7.0, 10.0, 7.0, 9.0, 7.0, 10.0, 8.0, 7.0]
    pts = [[0.0, 0.0]]
    cruise = []
    corner_of_leg_end = []
    for (dx, dy), v in zip(legs, cruise_by_leg):
        n_blocks = max(1, int(round(math.hypot(dx, dy) / 200.0)))
        x0, y0 = pts[-1]
        for b in range(1, n_blocks + 1):
            pts.append([x0 + dx * b / n_blocks, y0 + dy * b / n_blocks])
            cruise.append(v)
        corner_of_leg_end.append(len(pts) - 1)
    # traffic-light stops: a fixed pattern over the intersections
    dwell_cycle = [90.0, 0.0, 140.0, 60.0, 0.0, 180.0, 110.0, 0.0, 80.0, 150.0, 50.0, 0.0, 120.0]
    stops = []
    for i in range(1, len(pts) - 1):
        d = dwell_cycle[i % len(dwell_cycle)]
        if d > 0:
            stops.append({"waypoint": i, "duration": d})
    return pts, cruise, stops, corner_of_leg_end


def reference_scenario(seed: int = 2023) -> Scenario:
    """Desk-scale stand-in for a ~9 km downtown drive with four 5G outages.

    Outages of 13, 8, 20 and 100 s begin a few seconds before right turns.
    The 5G noise is set to a high-accuracy mmWave level (0.1 m range,
    0.1 deg AOD); see ``FivegConfig`` for the generic defaults.
    """
    pts, cruise, stops, corners = _reference_route()
    # corners[k] is the waypoint index at the end of street leg k
    outages = [
        OutageConfig(duration=13.0, waypoint=corners[0], lead=6.0),
        OutageConfig(duration=8.0, waypoint=corners[1], lead=2.0),
        OutageConfig(duration=20.0, waypoint=corners[5], lead=8.0),
        OutageConfig(duration=100.0, waypoint=corners[6], lead=10.0),
    ]
    # no traffic-light dwell at the outage corners, the vehicle turns through them
    outage_wps = {o.waypoint for o in outages}
    stops = [s for s in stops if s["waypoint"] not in outage_wps]
    route = RouteConfig(
        waypoints=pts,
        cruise_speed=cruise,
        turn_speed=4.0,
        turn_radius=10.0,
        accel=1.5,
        decel=2.0,
        stops=stops,
        initial_dwell=60.0,
        final_dwell=20.0,
    )
    fiveg = FivegConfig(
        sigma_range=0.1,
        sigma_aod_deg=0.1,
        max_range=350.0,
        blockage_fraction=0.28,
        blockage_mean_duration=4.0,
    )
    bias = BiasState(np.radians([0.02, -0.015, 0.01]), [0.03, -0.02, 0.025])
    return Scenario(route=route, name="reference", seed=seed, fiveg=fiveg, outages=outages, bias_truth=bias)
