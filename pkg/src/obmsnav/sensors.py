"""Sensor samples, error models, initial bias estimation and stationarity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .frames import Attitude, rotation_body_to_local


class BiasEstimationError(ValueError):
    """The window cannot be used for bias estimation."""


class ImuSample(NamedTuple):
    t: float
    f_b: NDArray[np.float64]  # m/s^2
    w_b: NDArray[np.float64]  # rad/s


class OdoSample(NamedTuple):
    t: float
    v_odo: float  # forward speed, m/s


def _vec3(value) -> NDArray[np.float64]:
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,)).copy()
    return arr


@dataclass
class SensorSpec:
    """Noise and bias characterization of the IMU and odometer.

    White-noise entries are per-sample variances; bias entries are the
    stationary variances of first-order Gauss-Markov processes with inverse
    correlation times ``beta_*``. Scalars are broadcast to all three axes.
    """

    gyro_noise_var: NDArray[np.float64] = field(default_factory=lambda: _vec3(math.radians(0.05) ** 2))
    accel_noise_var: NDArray[np.float64] = field(default_factory=lambda: _vec3(0.02**2))
    gyro_bias_var: NDArray[np.float64] = field(default_factory=lambda: _vec3(math.radians(0.01) ** 2))
    accel_bias_var: NDArray[np.float64] = field(default_factory=lambda: _vec3(0.005**2))
    beta_gyro: NDArray[np.float64] = field(default_factory=lambda: _vec3(1.0 / 600.0))
    beta_accel: NDArray[np.float64] = field(default_factory=lambda: _vec3(1.0 / 600.0))
    odo_vel_var: NDArray[np.float64] = field(default_factory=lambda: _vec3(0.1**2))

    def __post_init__(self) -> None:
        for name in (
            "gyro_noise_var",
            "accel_noise_var",
            "gyro_bias_var",
            "accel_bias_var",
            "beta_gyro",
            "beta_accel",
            "odo_vel_var",
        ):
            setattr(self, name, _vec3(getattr(self, name)))

    def validate(self, allow_zero: bool = False) -> None:
        for name in ("gyro_noise_var", "accel_noise_var", "gyro_bias_var", "accel_bias_var", "odo_vel_var"):
            v = getattr(self, name)
            if np.any(v < 0) or (not allow_zero and np.any(v == 0)):
                raise ValueError(f"{name} must be {'>= 0' if allow_zero else '> 0'}, got {v}")
        for name in ("beta_gyro", "beta_accel"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be > 0")

    @property
    def beta(self) -> NDArray[np.float64]:
        return np.concatenate([self.beta_gyro, self.beta_accel])

    @property
    def bias_var(self) -> NDArray[np.float64]:
        return np.concatenate([self.gyro_bias_var, self.accel_bias_var])

    def to_dict(self) -> dict:
        return {k: [float(x) for x in getattr(self, k)] for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sensor spec fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class BiasState:
    gyro: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    accel: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.gyro = _vec3(self.gyro)
        self.accel = _vec3(self.accel)

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.gyro, self.accel])

    @classmethod
    def from_vector(cls, v: ArrayLike) -> "BiasState":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:3], v[3:6])


def _check_window(t: NDArray, samples: NDArray, min_duration: float) -> None:
    if len(samples) == 0:
        raise BiasEstimationError("empty bias estimation window")
    duration = float(t[-1] - t[0]) if len(t) > 1 else 0.0
    if duration < min_duration:
        raise BiasEstimationError(
            f"bias window spans {duration:.2f} s, need at least {min_duration:.2f} s"
        )


def _check_still(samples: NDArray, noise_var: ArrayLike | None, what: str) -> None:
    if noise_var is None or len(samples) < 2:
        return
    var = samples.var(axis=0)
    limit = 10.0 * np.asarray(noise_var)
    if np.any(var > limit):
        raise BiasEstimationError(
            f"{what} variance {var} exceeds 10x sensor noise {limit}; vehicle not stationary"
        )


def estimate_gyro_bias(
    t: ArrayLike,
    w_b: ArrayLike,
    min_duration: float = 10.0,
    noise_var: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Mean gyro output over a stationary window.

    Earth rotation sensed during the window ends up in the estimate; with
    commercial-grade gyros it is small next to the true bias.
    """
    t = np.asarray(t, dtype=np.float64)
    w_b = np.asarray(w_b, dtype=np.float64).reshape(-1, 3)
    _check_window(t, w_b, min_duration)
    _check_still(w_b, noise_var, "gyro")
    return w_b.mean(axis=0)


def estimate_accel_bias(
    t: ArrayLike,
    f_b: ArrayLike,
    att0: Attitude,
    g: float,
    min_duration: float = 10.0,
    noise_var: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Mean accelerometer output minus gravity projected into the body frame."""
    t = np.asarray(t, dtype=np.float64)
    f_b = np.asarray(f_b, dtype=np.float64).reshape(-1, 3)
    _check_window(t, f_b, min_duration)
    _check_still(f_b, noise_var, "accelerometer")
    R_lb = rotation_body_to_local(att0).T
    return f_b.mean(axis=0) - R_lb @ np.array([0.0, 0.0, g])


def gm_propagate(
    b: BiasState,
    spec: SensorSpec,
    dt: float,
    noise: ArrayLike | None = None,
) -> BiasState:
    """Advance the first-order Gauss-Markov biases by ``dt``.

    ``noise`` holds six standard-normal draws (gyro then accelerometer); the
    driving term is scaled by ``sqrt(2 beta sigma_B^2 dt)`` so the process
    keeps its stationary variance ``sigma_B^2``.
    """
    beta = spec.beta
    if np.any(beta * dt >= 1.0):
        raise ValueError(f"beta * dt must be < 1 (got {beta * dt})")
    x = b.as_vector() * (1.0 - beta * dt)
    if noise is not None:
        x = x + np.sqrt(2.0 * beta * spec.bias_var * dt) * np.asarray(noise, dtype=np.float64)
    return BiasState.from_vector(x)


def is_stationary(v_mech: float, v_odo: float, v_eps: float) -> bool:
    """Stop detector: low mechanized speed and an exactly-zero odometer."""
    return abs(v_mech) <= v_eps and v_odo == 0.0


class StationaryWindow:
    """Tracks how long the stop condition has held continuously.

    Collects gyro samples while stopped so the gyro bias can be re-zeroed once
    the stop has lasted ``min_duration`` seconds.
    """

    def __init__(self, min_duration: float = 2.0):
        self.min_duration = min_duration
        self.t_start: float | None = None
        self._gyro: list[NDArray[np.float64]] = []

    def update(self, t: float, stationary: bool, w_b: NDArray[np.float64]) -> None:
        if not stationary:
            self.t_start = None
            self._gyro.clear()
            return
        if self.t_start is None:
            self.t_start = t
        self._gyro.append(np.asarray(w_b, dtype=np.float64))

    def sustained(self, t: float) -> bool:
        return self.t_start is not None and t - self.t_start >= self.min_duration

    def gyro_mean(self) -> NDArray[np.float64]:
        return np.mean(self._gyro, axis=0)
