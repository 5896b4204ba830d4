"""File formats: header blocks, JSON-lines sensor logs, dense CSV tables.

Text outputs start with a header block of ``# key: value`` lines carrying
configuration, seed and input hashes. Values are JSON so they read back
unchanged. Nothing time-of-day dependent is written, so reruns are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .fiveg import FivegMeasurement
from .mechanization import ImuStream, OdoStream


class DataError(ValueError):
    """An input file is missing, malformed or inconsistent."""


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def header_lines(meta: Mapping[str, object]) -> str:
    return "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in meta.items())


def read_header(path: str | Path) -> dict:
    """Parse the leading ``# key: value`` block of a text file."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, sep, value = line[2:].rstrip("\n").partition(": ")
            if not sep:
                raise DataError(f"{path}: malformed header line {line!r}")
            try:
                meta[key] = json.loads(value)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: header {key!r} is not JSON: {exc}") from None
    return meta


def write_csv(
    path: str | Path,
    columns: Sequence[str],
    data: NDArray[np.float64],
    meta: Mapping[str, object] | None = None,
) -> None:
    """Dense numeric CSV; floats use ``repr`` so they round-trip exactly."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ValueError(f"data shape {data.shape} does not match {len(columns)} columns")
    with open(path, "w") as fh:
        if meta:
            fh.write(header_lines(meta))
        fh.write(",".join(columns) + "\n")
        for row in data.tolist():
            fh.write(",".join(map(repr, row)) + "\n")


def read_csv(path: str | Path, columns: Sequence[str] | None = None) -> tuple[list[str], NDArray[np.float64]]:
    """Read a file written by ``write_csv``; ``columns`` checks the header row."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not lines:
        raise DataError(f"{path}: no column header")
    names = lines[0].strip().split(",")
    if columns is not None and names != list(columns):
        raise DataError(f"{path}: expected columns {list(columns)}, found {names}")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.size == 0:
        data = data.reshape(0, len(names))
    if data.shape[1] != len(names):
        raise DataError(f"{path}: row width does not match the header")
    return names, data


def _imu_record(t: float, f: NDArray, w: NDArray) -> dict:
    return {"t": t, "type": "imu", "f": f.tolist(), "w": w.tolist()}


def write_sensor_log(
    path: str | Path,
    imu: ImuStream,
    odo: OdoStream,
    measurements: Iterable[FivegMeasurement],
    meta: Mapping[str, object] | None = None,
) -> None:
    """Merge IMU, odometer and 5G records into one time-ordered JSON-lines file.

    At equal timestamps the order is IMU, odometer, 5G.
    """
    recs: list[tuple[float, int, int, dict]] = []
    for i in range(len(imu)):
        recs.append((float(imu.t[i]), 0, i, _imu_record(float(imu.t[i]), imu.f[i], imu.w[i])))
    for i in range(len(odo)):
        recs.append((float(odo.t[i]), 1, i, {"t": float(odo.t[i]), "type": "odo", "v": float(odo.v[i])}))
    for i, m in enumerate(measurements):
        recs.append((m.t, 2, i, m.to_record()))
    recs.sort(key=lambda r: r[:3])
    with open(path, "w") as fh:
        if meta:
            fh.write(header_lines(meta))
        for *_, rec in recs:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_sensor_log(path: str | Path) -> tuple[ImuStream, OdoStream, list[FivegMeasurement]]:
    imu_t, imu_f, imu_w, odo_t, odo_v, meas = [], [], [], [], [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            if line.startswith("#") or not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["type"]
                t = float(rec["t"])
                if not math.isfinite(t):
                    raise ValueError("non-finite time")
                if kind == "imu":
                    imu_t.append(t)
                    imu_f.append([float(v) for v in rec["f"]])
                    imu_w.append([float(v) for v in rec["w"]])
                    if len(imu_f[-1]) != 3 or len(imu_w[-1]) != 3:
                        raise ValueError("imu vectors must have 3 components")
                elif kind == "odo":
                    odo_t.append(t)
                    odo_v.append(float(rec["v"]))
                elif kind == "5g":
                    meas.append(FivegMeasurement.from_record(rec))
                else:
                    raise ValueError(f"unknown record type {kind!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad record: {exc}") from None
    if not imu_t:
        raise DataError(f"{path}: no IMU records")
    imu = ImuStream(np.array(imu_t), np.array(imu_f), np.array(imu_w))
    odo = OdoStream(np.array(odo_t), np.array(odo_v))
    return imu, odo, meas
