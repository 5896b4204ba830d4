"""Navigation pipelines over a set of sensor streams.

``ins-only``
    dead reckoning through ``mechanize`` (odometer only drives the stop test)
``ins-odo``
    the EKF with odometer velocity updates and no 5G
``5g-only-cv``
    constant-velocity filter on the 5G fixes
``5g-obms``
    the EKF with 5G position and odometer velocity updates
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fiveg import EpochMode, FivegFix, FivegMeasurement, FivegProcessor, BaseStation, fix_stream_hash
from .frames import WGS84, Attitude, EarthModel, Geodetic, LocalFrame, quat_from_attitude
from .fusion import CvConfig, FusionConfig, FusionResult, run_cv_benchmark, run_lc_fusion
from .mechanization import ImuStream, MechConfig, NavState, NavTrack, OdoStream, mechanize
from .sensors import BiasState, SensorSpec, estimate_accel_bias, estimate_gyro_bias

PIPELINES = ("ins-only", "ins-odo", "5g-only-cv", "5g-obms")


class PipelineError(ValueError):
    """Inputs cannot support the requested pipeline."""


@dataclass
class Flags:
    bias_removal: bool = True
    stop_mechanism: bool = True
    odometer: bool = True
    gate_chi2: float | None = None


@dataclass
class Inputs:
    """Everything a pipeline consumes; built from a simulation or from files."""

    imu: ImuStream
    odo: OdoStream | None
    measurements: list[FivegMeasurement]
    stations: list[BaseStation]
    anchor: Geodetic
    h_ue: float
    att0: Attitude
    spec: SensorSpec
    align_duration: float = 60.0
    gamma: float | None = None
    sigma_pwr: float = 3.0
    sigma_h: float = 0.1
    earth: EarthModel = field(default_factory=lambda: WGS84)

    def frame(self) -> LocalFrame:
        return LocalFrame(self.anchor, self.earth, max_range=None)

    def fixes(self) -> list[FivegFix]:
        proc = FivegProcessor(
            {b.id: b for b in self.stations}, self.frame(), self.h_ue, self.gamma, self.sigma_pwr, self.sigma_h
        )
        return proc.process(self.measurements)


@dataclass
class PipelineOutput:
    name: str
    track: NavTrack
    fixes_hash: str | None = None
    fusion: FusionResult | None = None
    biases: BiasState | None = None
    init: NavState | None = None


def initial_biases(inp: Inputs) -> BiasState:
    """Gyro and accelerometer biases from the stationary window at the start."""
    t = inp.imu.t
    m = t <= t[0] + inp.align_duration + 1e-9
    lat, h = inp.anchor.lat, inp.anchor.h
    g = inp.earth.gravity(lat, h)
    noise_g = inp.spec.gyro_noise_var if np.all(inp.spec.gyro_noise_var > 0) else None
    noise_f = inp.spec.accel_noise_var if np.all(inp.spec.accel_noise_var > 0) else None
    bw = estimate_gyro_bias(t[m], inp.imu.w[m], min_duration=min(10.0, inp.align_duration), noise_var=noise_g)
    bf = estimate_accel_bias(t[m], inp.imu.f[m], inp.att0, g, min_duration=min(10.0, inp.align_duration),
                             noise_var=noise_f)
    return BiasState(bw, bf)


def initial_state(inp: Inputs, fixes: list[FivegFix]) -> NavState:
    """Position from the first LOS 5G fix, zero velocity, reference attitude."""
    first = next((f for f in fixes if f.epoch_mode is EpochMode.FUSED), None)
    if first is None:
        raise PipelineError("no LOS 5G fix available to initialize position")
    return NavState(float(inp.imu.t[0]), first.pos, np.zeros(3), quat_from_attitude(inp.att0))


def run_pipeline(name: str, inp: Inputs, flags: Flags | None = None, monitor=None) -> PipelineOutput:
    """Run one named pipeline; ``monitor`` is forwarded to ``run_lc_fusion``."""
    if name not in PIPELINES:
        raise PipelineError(f"unknown pipeline {name!r}; valid: {', '.join(PIPELINES)}")
    flags = flags or Flags()
    fixes = inp.fixes()
    fixes_hash = fix_stream_hash(fixes)
    init = initial_state(inp, fixes)
    odo = inp.odo if flags.odometer else None

    if name == "5g-only-cv":
        track = run_cv_benchmark(inp.imu.t, fixes, init, inp.frame(), CvConfig())
        return PipelineOutput(name, track, fixes_hash, init=init)

    biases = initial_biases(inp) if flags.bias_removal else BiasState()
    if name == "ins-only":
        cfg = MechConfig(stop_mechanism=flags.stop_mechanism, bias_removal=flags.bias_removal, earth=inp.earth)
        track = mechanize(inp.imu, odo, init, biases, cfg)
        return PipelineOutput(name, track, fixes_hash, biases=biases, init=init)

    cfg = FusionConfig(
        stop_mechanism=flags.stop_mechanism,
        bias_removal=flags.bias_removal,
        use_odometer=flags.odometer,
        use_fiveg=name == "5g-obms",
        gate_chi2=flags.gate_chi2,
        earth=inp.earth,
    )
    res = run_lc_fusion(inp.imu, odo, fixes, init, biases, inp.spec, cfg, monitor)
    return PipelineOutput(name, res.track, fixes_hash, res, biases, init)


def inputs_from_simulation(sim) -> Inputs:
    sc = sim.scenario
    return Inputs(
        imu=sim.imu,
        odo=sim.odo,
        measurements=sim.measurements,
        stations=sim.stations,
        anchor=sim.frame.anchor,
        h_ue=sim.h_ue,
        att0=Attitude(*sim.truth.att[0]),
        spec=sc.sensors,
        align_duration=sc.align_duration,
        gamma=sc.fiveg.gamma,
        sigma_pwr=sc.fiveg.sigma_pwr,
        sigma_h=sc.fiveg.sigma_h,
        earth=WGS84,
    )
