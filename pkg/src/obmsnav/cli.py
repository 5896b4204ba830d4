"""Command line: ``obmsnav simulate | run | compare | stats``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from . import kernels
from .evaluation import (
    ErrorStats,
    ExtrapolationError,
    cdf_csv,
    cdf_points,
    error_series,
    stats_csv,
    stats_text,
    summarize,
)
from .fiveg import BaseStation
from .frames import WGS84, Attitude
from .fusion import STATE_NAMES, NumericalError
from .mechanization import PolarSingularityError, StreamError
from .pipelines import PIPELINES, Flags, Inputs, PipelineError, PipelineOutput, run_pipeline
from .records import DataError, header_lines, read_csv, read_sensor_log, sha256_file, write_csv
from .records import write_sensor_log
from .scenario import ConfigError, Scenario, load_scenario, reference_scenario, simulate
from .trajectory import TrajectoryError

log = logging.getLogger("obmsnav")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

SIM_META = "scenario.json"
TRUTH_FILE = "truth.csv"
SENSOR_FILE = "sensors.jsonl"
RUN_META = "run.json"
NAV_COLUMNS = ["t", "lat_rad", "lon_rad", "h_m", "ve", "vn", "vu", "pitch_rad", "roll_rad", "azimuth_rad"]
ERROR_COLUMNS = ["t", "de_m", "dn_m", "du_m", "e3d_m", "e2d_m"]
MODE_CODES = {"FUSED": 1.0, "INS_ONLY": 0.0, "NONE": -1.0}


def _dump_json(path: Path, obj: object) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


def _scenario_from_arg(arg: str, seed: int | None) -> Scenario:
    if arg == "reference":
        sc = reference_scenario() if seed is None else reference_scenario(seed)
    else:
        sc = load_scenario(arg)
        if seed is not None:
            sc.seed = seed
    sc.validate()
    return sc


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(scenario: str, out: str | Path, seed: int | None = None) -> Path:
    """Generate truth and sensor streams for a scenario into ``out``."""
    sc = _scenario_from_arg(scenario, seed)
    sim = simulate(sc)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    config = sc.to_dict()
    meta = {"scenario": sc.name, "seed": sc.seed}

    duration = sim.trajectory.duration
    t_truth = np.arange(int(np.floor(duration * sc.rates.truth + 1e-9)) + 1) / sc.rates.truth
    if t_truth[-1] < duration:
        t_truth = np.append(t_truth, duration)  # truth must span the last IMU epoch
    truth = sim.trajectory.at(t_truth)
    write_csv(out / TRUTH_FILE, NAV_COLUMNS, np.column_stack([truth.t, truth.pos, truth.vel, truth.att]), meta)
    write_sensor_log(out / SENSOR_FILE, sim.imu, sim.odo, sim.measurements, meta)

    sim_meta = {
        "config": config,
        "seed": sc.seed,
        "stations": [b.to_dict() for b in sim.stations],
        "outages": [{"start": s, "duration": d} for s, d in sim.outages],
        "duration": duration,
        "hashes": {TRUTH_FILE: sha256_file(out / TRUTH_FILE), SENSOR_FILE: sha256_file(out / SENSOR_FILE)},
    }
    _dump_json(out / SIM_META, sim_meta)
    return out


# ---------------------------------------------------------------------------
# run


def _load_simulation(sim_dir: Path) -> tuple[dict, Scenario, Inputs, np.ndarray]:
    meta = _load_json(sim_dir / SIM_META)
    try:
        sc = Scenario.from_dict(meta["config"])
        hashes = meta["hashes"]
        stations = [BaseStation.from_dict(b) for b in meta["stations"]]
    except KeyError as exc:
        raise DataError(f"{sim_dir / SIM_META}: missing key {exc}") from None
    for name, expected in hashes.items():
        if sha256_file(sim_dir / name) != expected:
            raise DataError(f"{sim_dir / name} does not match the hash recorded in {SIM_META}")
    imu, odo, meas = read_sensor_log(sim_dir / SENSOR_FILE)
    _, truth = read_csv(sim_dir / TRUTH_FILE, NAV_COLUMNS)
    if len(truth) == 0:
        raise DataError(f"{sim_dir / TRUTH_FILE}: no rows")
    inp = Inputs(
        imu=imu,
        odo=odo,
        measurements=meas,
        stations=stations,
        anchor=sc.anchor_geodetic,
        h_ue=sc.fiveg.ue_height,
        att0=Attitude(*truth[0, 7:10]),
        spec=sc.sensors,
        align_duration=sc.align_duration,
        gamma=sc.fiveg.gamma,
        sigma_pwr=sc.fiveg.sigma_pwr,
        sigma_h=sc.fiveg.sigma_h,
        earth=WGS84,
    )
    return meta, sc, inp, truth


def _states_table(out: PipelineOutput) -> tuple[list[str], np.ndarray]:
    fr = out.fusion
    cols = ["t", *STATE_NAMES, *(f"P_{n}" for n in STATE_NAMES), "mode"]
    mode = np.array([MODE_CODES[str(s)] for s in fr.mode])
    return cols, np.column_stack([out.track.t, fr.x, fr.p_diag, mode])


def cmd_run(
    scenario: str | Path,
    pipeline: str,
    out: str | Path,
    flags: Flags | None = None,
    seed: int | None = None,
    tail: float = 0.0,
) -> dict:
    """Run one pipeline on simulated streams and write estimates and statistics.

    ``scenario`` is a directory written by ``cmd_simulate``; a scenario file
    (or ``reference``) is simulated first into ``out/sim``.
    """
    if pipeline not in PIPELINES:
        raise PipelineError(f"unknown pipeline {pipeline!r}; valid: {', '.join(PIPELINES)}")
    flags = flags or Flags()
    out = Path(out)
    sim_dir = Path(scenario)
    if not sim_dir.is_dir():
        sim_dir = cmd_simulate(str(scenario), out / "sim", seed)
    elif seed is not None:
        raise ConfigError("--seed applies when simulating; streams in a directory already fix it")
    meta, sc, inp, truth = _load_simulation(sim_dir)
    out.mkdir(parents=True, exist_ok=True)

    res = run_pipeline(pipeline, inp, flags)
    frame = inp.frame()
    errs = error_series(res.track.t, res.track.pos, truth[:, 0], truth[:, 1:4], frame)
    windows = [(o["start"], o["duration"]) for o in meta["outages"]]
    s3 = summarize(errs.e3d, errs.t, windows, tail)
    s2 = summarize(errs.e2d, errs.t, windows, tail)

    run_cfg = {
        "pipeline": pipeline,
        "bias_removal": flags.bias_removal,
        "stop_mechanism": flags.stop_mechanism,
        "odometer": flags.odometer,
        "gate_chi2": flags.gate_chi2,
    }
    hdr = {
        "run": run_cfg,
        "scenario": sc.name,
        "seed": sc.seed,
        "inputs": meta["hashes"],
        "fix_stream": res.fixes_hash,
    }
    tr = res.track
    write_csv(out / "estimate.csv", NAV_COLUMNS, np.column_stack([tr.t, tr.pos, tr.vel, tr.att]), hdr)
    if res.fusion is not None:
        write_csv(out / "states.csv", *_states_table(res), {**hdr, "mode_codes": MODE_CODES})
    write_csv(out / "errors.csv", ERROR_COLUMNS, np.column_stack([errs.t, errs.enu, errs.e3d, errs.e2d]), hdr)
    tables = {"3D": s3, "2D": s2}
    (out / "stats.csv").write_text(header_lines(hdr) + stats_csv(tables))
    (out / "stats.txt").write_text(stats_text(tables))
    (out / "cdf.csv").write_text(header_lines(hdr) + _cdf_two_column(errs.e3d))

    run_meta = {
        **hdr,
        "outages": meta["outages"],
        "tail": tail,
        "stats_3d": _stats_dict(s3),
        "stats_2d": _stats_dict(s2),
    }
    if res.fusion is not None:
        run_meta["filter"] = {
            "position_updates": len(res.fusion.pos_update_times),
            "odometer_updates": res.fusion.odo_updates,
            "gated": res.fusion.gated,
        }
    _dump_json(out / RUN_META, run_meta)
    return run_meta


def _cdf_two_column(errors: np.ndarray) -> str:
    e, f = cdf_points(errors)
    return "error_m,fraction\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(e.tolist(), f.tolist()))


def _stats_dict(s: ErrorStats) -> dict:
    return {
        "n": s.n,
        "rms": s.rms,
        "max": s.max,
        "two_sigma": s.two_sigma,
        "pct_below": {repr(k): v for k, v in s.pct_below.items()},
        "windows": [{"start": w.start, "end": w.end, "n": w.n, "rms": w.rms, "max": w.max} for w in s.windows],
    }


# ---------------------------------------------------------------------------
# compare / stats


def _run_stats(run_dir: Path, tail: float | None) -> tuple[dict, ErrorStats, ErrorStats, np.ndarray]:
    meta = _load_json(run_dir / RUN_META)
    _, errs = read_csv(run_dir / "errors.csv", ERROR_COLUMNS)
    if len(errs) == 0:
        raise DataError(f"{run_dir / 'errors.csv'}: no rows")
    windows = [(o["start"], o["duration"]) for o in meta.get("outages", [])]
    tail = meta.get("tail", 0.0) if tail is None else tail
    s3 = summarize(errs[:, 4], errs[:, 0], windows, tail)
    s2 = summarize(errs[:, 5], errs[:, 0], windows, tail)
    return meta, s3, s2, errs[:, 4]


def cmd_compare(run_dirs: Sequence[str | Path], out: str | Path | None = None, tail: float | None = None) -> str:
    """Side-by-side statistics of runs over identical input streams."""
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    runs = [(Path(d), *_run_stats(Path(d), tail)) for d in run_dirs]
    ref = runs[0][1]
    for d, meta, *_ in runs[1:]:
        if meta.get("inputs") != ref.get("inputs") or meta.get("fix_stream") != ref.get("fix_stream"):
            raise DataError(f"{d} was run on different input streams than {runs[0][0]}; refusing to compare")
    names: list[str] = []
    for d, meta, *_ in runs:
        label = meta["run"]["pipeline"]
        if label in names:
            label = f"{label}#{len(names) + 1}"
        names.append(label)
    t3 = {n: r[2] for n, r in zip(names, runs)}
    t2 = {n: r[3] for n, r in zip(names, runs)}
    text = "3D error\n" + stats_text(t3) + "\n2D horizontal error\n" + stats_text(t2)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        hdr = {"runs": [str(d) for d, *_ in runs], "inputs": ref.get("inputs"), "seed": ref.get("seed")}
        (out / "compare_3d.csv").write_text(header_lines(hdr) + stats_csv(t3))
        (out / "compare_2d.csv").write_text(header_lines(hdr) + stats_csv(t2))
        (out / "compare.txt").write_text(text)
        (out / "cdf.csv").write_text(header_lines(hdr) + cdf_csv({n: r[4] for n, r in zip(names, runs)}))
    return text


def cmd_stats(run_dir: str | Path, tail: float | None = None) -> str:
    meta, s3, s2, _ = _run_stats(Path(run_dir), tail)
    return f"{meta['run']['pipeline']}\n" + stats_text({"3D": s3, "2D": s2})


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obmsnav", description="INS/odometer/5G navigation simulator and evaluator")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate truth and sensor streams")
    s.add_argument("--scenario", required=True, help="scenario file (YAML/JSON) or 'reference'")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("run", help="run one pipeline and evaluate it")
    r.add_argument("--scenario", required=True, help="directory from 'simulate', a scenario file, or 'reference'")
    r.add_argument("--pipeline", required=True, choices=PIPELINES)
    r.add_argument("--seed", type=int, default=None, help="seed override when simulating a scenario file")
    r.add_argument("--out", required=True)
    r.add_argument("--no-bias-removal", action="store_true")
    r.add_argument("--no-stop-mechanism", action="store_true")
    r.add_argument("--no-odometer", action="store_true")
    r.add_argument("--gate-chi2", type=float, default=None, help="chi-square gate on position innovations")
    r.add_argument("--tail", type=float, default=0.0, help="seconds after each outage included in its stats")

    c = sub.add_parser("compare", help="compare runs over the same streams")
    c.add_argument("runs", nargs="+", help="run directories")
    c.add_argument("--out", default=None)
    c.add_argument("--tail", type=float, default=None)

    st = sub.add_parser("stats", help="print the statistics of a run")
    st.add_argument("run", help="run directory")
    st.add_argument("--tail", type=float, default=None)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", kernels.backend)
    try:
        if args.command == "simulate":
            out = cmd_simulate(args.scenario, args.out, args.seed)
            print(f"wrote {out}")
        elif args.command == "run":
            flags = Flags(
                bias_removal=not args.no_bias_removal,
                stop_mechanism=not args.no_stop_mechanism,
                odometer=not args.no_odometer,
                gate_chi2=args.gate_chi2,
            )
            cmd_run(args.scenario, args.pipeline, args.out, flags, args.seed, args.tail)
            print((Path(args.out) / "stats.txt").read_text(), end="")
        elif args.command == "compare":
            print(cmd_compare(args.runs, args.out, args.tail), end="")
        else:
            print(cmd_stats(args.run, args.tail), end="")
    except (ConfigError, PipelineError, TrajectoryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, StreamError, ExtrapolationError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, PolarSingularityError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
