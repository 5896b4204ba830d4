"""Loosely coupled 15-state EKF fusing INS, odometer velocity and 5G fixes.

The state holds the navigation quantities themselves (total state):

    x = [lat, lon, h, ve, vn, vu, p, r, a, bw_x, bw_y, bw_z, bf_x, bf_y, bf_z]

Prediction runs the nonlinear mechanization for the mean and the exact
Jacobian of that discrete step for the covariance. A constant-velocity
position/velocity filter on the same 5G fixes is provided as a benchmark.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from . import kernels
from .fiveg import EpochMode, FivegFix
from .frames import WGS84, EarthModel, Geodetic, LocalFrame, quat_from_attitude, rotation_body_to_local, wrap_pi
from .mechanization import (
    ImuStream,
    NavState,
    NavTrack,
    OdoStream,
    check_stream_times,
    project_odometer,
)
from .sensors import BiasState, SensorSpec

log = logging.getLogger(__name__)

STATE_NAMES = (
    "lat", "lon", "h", "ve", "vn", "vu", "p", "r", "a",
    "bw_x", "bw_y", "bw_z", "bf_x", "bf_y", "bf_z",
)
POS, VEL, ATT, BIAS = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 15)
# Measurements stamped up to this much after an IMU epoch are applied at it.
TIME_TOL = 1e-6


class NumericalError(RuntimeError):
    """Covariance lost symmetry or positive semidefiniteness."""


@dataclass
class FilterState:
    t: float
    x: NDArray[np.float64]
    P: NDArray[np.float64]

    def nav_state(self) -> NavState:
        return NavState(self.t, Geodetic(*self.x[POS]), self.x[VEL].copy(), quat_from_attitude(self.x[ATT]))

    def biases(self) -> BiasState:
        return BiasState.from_vector(self.x[BIAS])

    def check_health(self, sym_tol: float = 1e-10, psd_tol: float = 1e-9) -> None:
        P = self.P
        if not np.all(np.isfinite(P)):
            raise NumericalError(f"non-finite covariance at t={self.t}")
        scale = np.max(np.abs(P))
        if np.max(np.abs(P - P.T)) > sym_tol * scale:
            raise NumericalError(f"covariance not symmetric at t={self.t}")
        if np.linalg.eigvalsh(P)[0] < -psd_tol * np.trace(P):
            raise NumericalError(f"covariance not PSD at t={self.t}")


@dataclass
class FilterMatrices:
    Phi: NDArray[np.float64]
    Q: NDArray[np.float64]
    G: NDArray[np.float64]
    H: NDArray[np.float64] | None = None
    R: NDArray[np.float64] | None = None


@dataclass
class Measurement:
    """Position (geodetic, with ENU covariance in m^2) and/or ENU velocity."""

    pos: Geodetic | None = None
    pos_cov: NDArray[np.float64] | None = None
    vel: NDArray[np.float64] | None = None
    vel_var: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if self.pos is None and self.vel is None:
            raise ValueError("measurement needs a position part, a velocity part or both")
        if (self.pos is None) != (self.pos_cov is None):
            raise ValueError("position and its covariance must be given together")
        if (self.vel is None) != (self.vel_var is None):
            raise ValueError("velocity and its variances must be given together")


@dataclass
class UpdateResult:
    state: FilterState
    accepted: bool
    nis: float


@dataclass
class FusionConfig:
    stop_mechanism: bool = True
    bias_removal: bool = True
    use_odometer: bool = True
    use_fiveg: bool = True
    v_eps: float = 0.1
    gate_chi2: float | None = None  # e.g. 0.999; None disables gating
    check_health: bool = True
    nominal_rate: float = 20.0
    gap_factor: float = 10.0
    init_pos_std: float = 1.0
    init_vel_std: float = 0.1
    init_att_std: tuple[float, float, float] = (math.radians(0.5), math.radians(0.5), math.radians(2.0))
    earth: EarthModel = field(default_factory=lambda: WGS84)


def build_Q(spec: SensorSpec) -> NDArray[np.float64]:
    return np.diag(
        np.concatenate([spec.gyro_noise_var, spec.accel_noise_var, spec.gyro_bias_var, spec.accel_bias_var])
    )


def build_G(att: ArrayLike, spec: SensorSpec) -> NDArray[np.float64]:
    """Noise-coupling matrix; columns are gyro noise, accel noise, gyro-bias and accel-bias drivers."""
    R = rotation_body_to_local(att)
    G = np.zeros((15, 12))
    G[VEL, 3:6] = R
    G[ATT, 0:3] = R
    G[BIAS, 6:12] = np.diag(np.sqrt(2.0 * spec.beta))
    return G


def assemble_phi(
    x: ArrayLike,
    f_b: ArrayLike,
    w_b: ArrayLike,
    spec: SensorSpec,
    dt: float,
    earth: EarthModel = WGS84,
) -> NDArray[np.float64]:
    """State-transition matrix of one prediction step (raw IMU sample, biases from ``x``)."""
    x = np.asarray(x, dtype=np.float64)
    if dt == 0.0:
        return np.eye(15)
    _, _, Phi = kernels.predict_step(
        x, np.zeros((15, 15)), np.asarray(f_b, float), np.asarray(w_b, float), dt,
        spec.beta, np.zeros((15, 15)), False, kernels.earth_tuple(earth),
    )
    return np.asarray(Phi)


def discrete_noise(att: ArrayLike, spec: SensorSpec, dt: float) -> NDArray[np.float64]:
    G = build_G(att, spec)
    Qd = G @ build_Q(spec) @ G.T * dt
    return 0.5 * (Qd + Qd.T)


def _frozen_phi(spec: SensorSpec, dt: float) -> NDArray[np.float64]:
    Phi = np.eye(15)
    Phi[BIAS, BIAS] = np.diag(1.0 - spec.beta * dt)
    return Phi


def predict(
    fs: FilterState,
    f_b: ArrayLike,
    w_b: ArrayLike,
    spec: SensorSpec,
    dt: float,
    frozen: bool = False,
    earth: EarthModel = WGS84,
) -> tuple[FilterState, NDArray[np.float64]]:
    """Propagate state and covariance by ``dt``; returns the new state and Phi.

    ``frozen`` holds the navigation states (stop mechanism) while the
    biases still decay and the covariance still grows by the process noise.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    Qd = discrete_noise(fs.x[ATT], spec, dt)
    x1, P1, Phi = kernels.predict_step(
        fs.x, fs.P, np.asarray(f_b, float), np.asarray(w_b, float), dt, spec.beta, Qd,
        frozen, kernels.earth_tuple(earth),
    )
    return FilterState(fs.t + dt, np.asarray(x1), np.asarray(P1)), np.asarray(Phi)


def enu_to_geodetic_jacobian(pos: ArrayLike, earth: EarthModel = WGS84) -> NDArray[np.float64]:
    """d(lat, lon, h)/d(e, n, u) at ``pos``."""
    lat, _, h = pos[0], pos[1], pos[2]
    m, n = earth.radii(lat)
    T = np.zeros((3, 3))
    T[0, 1] = 1.0 / (m + h)
    T[1, 0] = 1.0 / ((n + h) * math.cos(lat))
    T[2, 2] = 1.0
    return T


def measurement_model(fs: FilterState, z: Measurement, earth: EarthModel = WGS84):
    """Innovation, H and R for the parts of ``z`` that are present."""
    x = fs.x
    nus, Hs, Rs = [], [], []
    if z.pos is not None:
        nu = np.asarray(z.pos, dtype=np.float64) - x[POS]
        nu[1] = wrap_pi(nu[1])
        T = enu_to_geodetic_jacobian(x[POS], earth)
        H = np.zeros((3, 15))
        H[:, POS] = np.eye(3)
        nus.append(nu)
        Hs.append(H)
        Rs.append(T @ np.asarray(z.pos_cov) @ T.T)
    if z.vel is not None:
        H = np.zeros((3, 15))
        H[:, VEL] = np.eye(3)
        nus.append(np.asarray(z.vel, dtype=np.float64) - x[VEL])
        Hs.append(H)
        Rs.append(np.diag(np.asarray(z.vel_var, dtype=np.float64)))
    nu = np.concatenate(nus)
    H = np.vstack(Hs)
    R = np.zeros((len(nu), len(nu)))
    i = 0
    for r in Rs:
        R[i : i + 3, i : i + 3] = r
        i += 3
    return nu, H, R


def update(
    fs: FilterState,
    z: Measurement,
    gate_chi2: float | None = None,
    earth: EarthModel = WGS84,
) -> UpdateResult:
    """Kalman measurement update with optional chi-squared innovation gating.

    The covariance is reduced by ``W W^T`` with ``W = P H^T L^-T`` and
    ``S = L L^T``, so no diagonal entry of ``P`` can grow.
    """
    nu, H, R = measurement_model(fs, z, earth)
    if np.any(np.diag(R) <= 0):
        raise ValueError("measurement variances must be > 0")
    P = fs.P
    PHt = P @ H.T
    S = H @ PHt + R
    S = 0.5 * (S + S.T)
    L = np.linalg.cholesky(S)
    W = np.linalg.solve(L, PHt.T).T  # P H^T L^-T
    e = np.linalg.solve(L, nu)
    nis = float(e @ e)
    if gate_chi2 is not None and nis > stats.chi2.ppf(gate_chi2, len(nu)):
        log.info("t=%.3f update rejected by gate (NIS %.1f, dof %d)", fs.t, nis, len(nu))
        return UpdateResult(fs, False, nis)
    x = fs.x + W @ e
    P1 = P - W @ W.T
    P1 = 0.5 * (P1 + P1.T)
    x[8] %= 2.0 * math.pi
    x[1] = wrap_pi(x[1])
    return UpdateResult(FilterState(fs.t, x, P1), True, nis)


def initial_filter_state(
    init: NavState, biases: BiasState, spec: SensorSpec, cfg: FusionConfig
) -> FilterState:
    x = np.zeros(15)
    x[POS] = init.pos
    x[VEL] = init.vel
    x[ATT] = init.att
    if cfg.bias_removal:
        x[BIAS] = biases.as_vector()
    m, n = cfg.earth.radii(init.pos[0])
    h = init.pos[2]
    sd = np.concatenate(
        [
            [cfg.init_pos_std / (m + h), cfg.init_pos_std / ((n + h) * math.cos(init.pos[0])), cfg.init_pos_std],
            np.full(3, cfg.init_vel_std),
            cfg.init_att_std,
            np.sqrt(spec.bias_var),
        ]
    )
    return FilterState(init.t, x, np.diag(sd**2))


@dataclass
class FusionResult:
    track: NavTrack
    x: NDArray[np.float64]  # (n, 15)
    p_diag: NDArray[np.float64]  # (n, 15)
    mode: NDArray[np.str_]  # per IMU epoch: FUSED, INS_ONLY or NONE (no 5G yet)
    pos_update_times: list[float]
    odo_updates: int
    gated: int
    final: FilterState


def _zupt_candidate(odo: OdoStream | None, j: int) -> bool:
    return odo is not None and j >= 0 and odo.v[j] == 0.0


def run_lc_fusion(
    imu: ImuStream,
    odo: OdoStream | None,
    fixes: list[FivegFix] | None,
    init: NavState,
    biases: BiasState,
    spec: SensorSpec,
    cfg: FusionConfig | None = None,
    monitor=None,
) -> FusionResult:
    """Run the EKF over time-ordered streams; one output row per IMU sample.

    Odometer and 5G records stamped in ``(t_{k-1}, t_k]`` are applied after
    the prediction to ``t_k``; a 5G position update is used only when its
    epoch is FUSED. ``monitor(k, fs, Phi, f_b, w_b, dt)``, when given, is
    called after each prediction.
    """
    cfg = cfg or FusionConfig()
    earth = cfg.earth
    et = kernels.earth_tuple(earth)
    check_stream_times(imu.t, cfg.nominal_rate, cfg.gap_factor)
    n = len(imu)
    fs = initial_filter_state(init, biases, spec, cfg)
    if cfg.check_health:
        fs.check_health()

    xs = np.empty((n, 15))
    pd = np.empty((n, 15))
    modes = np.full(n, "NONE", dtype="<U8")
    xs[0], pd[0] = fs.x, np.diag(fs.P)
    pos_updates: list[float] = []
    n_odo = 0
    n_gated = 0
    mode = "NONE"

    odo_use = odo if (cfg.use_odometer and odo is not None) else None
    fix_list = fixes if (cfg.use_fiveg and fixes is not None) else []
    j_odo = -1  # latest odometer sample with t <= t_k (for the stop test)
    i_odo = 0  # next odometer sample to apply as an update
    i_fix = 0
    beta = spec.beta
    frozen_phi = None
    odo_t = odo.t if odo is not None else np.empty(0)

    frozen = False
    v_test = fs.x[VEL].copy()
    for k in range(1, n):
        tk = imu.t[k]
        dt = tk - imu.t[k - 1]
        fb, wb = imu.f[k], imu.w[k]
        new_odo = False
        while j_odo + 1 < len(odo_t) and odo_t[j_odo + 1] <= tk + TIME_TOL:
            j_odo += 1
            new_odo = True
        if frozen and new_odo:
            v_test = fs.x[VEL].copy()

        Qd = discrete_noise(fs.x[ATT], spec, dt)
        x0 = fs.x
        if frozen:
            # stop test integrates from the last odometer sample, as in mechanize
            x0 = fs.x.copy()
            x0[VEL] = v_test
        x1, P1, Phi = kernels.predict_step(x0, fs.P, fb, wb, dt, beta, Qd, False, et)
        frozen = (
            cfg.stop_mechanism
            and _zupt_candidate(odo, j_odo)
            and math.sqrt(x1[3] ** 2 + x1[4] ** 2 + x1[5] ** 2) <= cfg.v_eps
        )
        if frozen:
            v_test = np.asarray(x1[VEL]).copy()
            if frozen_phi is None or frozen_phi[1] != dt:
                frozen_phi = (_frozen_phi(spec, dt), dt)
            Phi = frozen_phi[0]
            x1 = fs.x.copy()
            x1[BIAS] = fs.x[BIAS] * (1.0 - beta * dt)
            P1 = kernels.propagate_cov(fs.P, Phi, Qd)
        fs = FilterState(tk, np.asarray(x1), np.asarray(P1))
        if monitor is not None:
            monitor(k, fs, np.asarray(Phi), fb, wb, dt)

        while i_fix < len(fix_list) and fix_list[i_fix].t <= tk + TIME_TOL:
            fix = fix_list[i_fix]
            i_fix += 1
            mode = fix.epoch_mode.value
            if fix.epoch_mode is EpochMode.FUSED:
                res = update(fs, Measurement(pos=fix.pos, pos_cov=fix.cov), cfg.gate_chi2, earth)
                fs = res.state
                if res.accepted:
                    pos_updates.append(fix.t)
                else:
                    n_gated += 1
        if odo_use is not None:
            while i_odo < len(odo_use) and odo_use.t[i_odo] <= tk + TIME_TOL:
                v_enu = project_odometer(float(odo_use.v[i_odo]), fs.x[ATT])
                i_odo += 1
                res = update(fs, Measurement(vel=v_enu, vel_var=spec.odo_vel_var), cfg.gate_chi2, earth)
                fs = res.state
                n_odo += res.accepted
                n_gated += not res.accepted
        if cfg.check_health:
            fs.check_health()
        xs[k], pd[k] = fs.x, np.diag(fs.P)
        modes[k] = mode

    track = NavTrack(imu.t.copy(), xs[:, POS].copy(), xs[:, VEL].copy(), xs[:, ATT].copy(), np.zeros(n, bool))
    return FusionResult(track, xs, pd, modes, pos_updates, n_odo, n_gated, fs)


@dataclass
class CvConfig:
    accel_psd: float = 1.0  # m^2/s^3, white-acceleration spectral density per axis
    init_pos_std: float = 1.0
    init_vel_std: float = 0.5


def run_cv_benchmark(
    times: ArrayLike,
    fixes: list[FivegFix],
    init: NavState,
    frame: LocalFrame,
    cfg: CvConfig | None = None,
) -> NavTrack:
    """Constant-velocity position/velocity KF on 5G fixes, sampled at ``times``.

    State is ``[e, n, u, ve, vn, vu]`` in ``frame``. Without a LOS fix the
    state coasts at its last velocity.
    """
    cfg = cfg or CvConfig()
    times = np.asarray(times, dtype=np.float64)
    n = len(times)
    x = np.zeros(6)
    x[:3] = frame.to_local(init.pos)
    x[3:] = init.vel
    P = np.diag([cfg.init_pos_std**2] * 3 + [cfg.init_vel_std**2] * 3)
    H = np.hstack([np.eye(3), np.zeros((3, 3))])
    I3 = np.eye(3)
    out = np.empty((n, 6))
    out[0] = x
    i_fix = 0
    q = cfg.accel_psd
    for k in range(1, n):
        dt = times[k] - times[k - 1]
        F = np.eye(6)
        F[:3, 3:] = dt * I3
        Qd = q * np.block([[dt**3 / 3 * I3, dt**2 / 2 * I3], [dt**2 / 2 * I3, dt * I3]])
        x = F @ x
        P = F @ P @ F.T + Qd
        while i_fix < len(fixes) and fixes[i_fix].t <= times[k] + TIME_TOL:
            fix = fixes[i_fix]
            i_fix += 1
            if fix.epoch_mode is not EpochMode.FUSED:
                continue
            z = np.asarray(frame.to_local(fix.pos))
            S = H @ P @ H.T + fix.cov
            K = np.linalg.solve(S, H @ P).T
            x = x + K @ (z - H @ x)
            P = P - K @ S @ K.T
            P = 0.5 * (P + P.T)
        out[k] = x
    geo = frame.to_geodetic_array(out[:, :3])
    att = np.zeros((n, 3))
    att[:, 2] = np.mod(np.arctan2(out[:, 3], out[:, 4]), 2.0 * math.pi)
    return NavTrack(times.copy(), geo, out[:, 3:].copy(), att, np.zeros(n, bool))
