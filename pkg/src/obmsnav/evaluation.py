"""Positioning error series, summary statistics, empirical CDFs and tables."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .frames import LocalFrame

THRESHOLDS = (2.0, 1.0, 0.3)  # m, for the "< x" coverage rows
TWO_SIGMA_LEVEL = 0.95
TIME_TOL = 1e-9


class ExtrapolationError(ValueError):
    """Estimate epochs fall outside the truth time span."""


@dataclass
class ErrorSeries:
    t: NDArray[np.float64]
    enu: NDArray[np.float64]  # (n, 3) estimate minus truth, m

    @property
    def e3d(self) -> NDArray[np.float64]:
        return np.linalg.norm(self.enu, axis=1)

    @property
    def e2d(self) -> NDArray[np.float64]:
        return np.hypot(self.enu[:, 0], self.enu[:, 1])


def interpolate_truth(
    t: ArrayLike, truth_t: ArrayLike, truth_enu: ArrayLike
) -> NDArray[np.float64]:
    """Linear interpolation of an ENU truth track to the epochs ``t``."""
    t = np.asarray(t, dtype=np.float64)
    truth_t = np.asarray(truth_t, dtype=np.float64)
    truth_enu = np.asarray(truth_enu, dtype=np.float64)
    if len(truth_t) == 0 or len(t) == 0:
        raise ExtrapolationError("empty time series")
    if t[0] < truth_t[0] - TIME_TOL or t[-1] > truth_t[-1] + TIME_TOL:
        raise ExtrapolationError(
            f"estimate span [{t[0]}, {t[-1]}] exceeds truth span [{truth_t[0]}, {truth_t[-1]}]"
        )
    return np.column_stack([np.interp(t, truth_t, truth_enu[:, i]) for i in range(3)])


def error_series(
    est_t: ArrayLike,
    est_pos: ArrayLike,
    truth_t: ArrayLike,
    truth_pos: ArrayLike,
    frame: LocalFrame,
) -> ErrorSeries:
    """Per-epoch ENU error of an estimate track against truth.

    Both tracks are geodetic ``(lat, lon, h)`` rows; they are mapped into
    ``frame`` and truth is interpolated linearly in ENU to ``est_t``.
    """
    est_t = np.asarray(est_t, dtype=np.float64)
    est_pos = np.asarray(est_pos, dtype=np.float64)
    truth_pos = np.asarray(truth_pos, dtype=np.float64)
    est_enu = frame.to_local_array(est_pos[:, 0], est_pos[:, 1], est_pos[:, 2])
    tru_enu = frame.to_local_array(truth_pos[:, 0], truth_pos[:, 1], truth_pos[:, 2])
    return ErrorSeries(est_t, est_enu - interpolate_truth(est_t, truth_t, tru_enu))


def two_sigma(errors: ArrayLike) -> float:
    """95th percentile by the inverted empirical CDF (an observed value)."""
    return float(np.quantile(np.asarray(errors, dtype=np.float64), TWO_SIGMA_LEVEL, method="inverted_cdf"))


@dataclass(frozen=True)
class WindowStats:
    start: float
    end: float
    n: int
    rms: float
    max: float


@dataclass
class ErrorStats:
    n: int
    rms: float
    max: float
    mean: float
    median: float
    two_sigma: float
    pct_below: dict[float, float]
    windows: list[WindowStats] = field(default_factory=list)

    def rows(self) -> list[tuple[str, float]]:
        """Metric rows in table order; per-window rows follow the overall ones."""
        out = [("RMS (m)", self.rms), ("Max (m)", self.max)]
        out += [(f"<{_fmt_threshold(th)} (%)", self.pct_below[th]) for th in sorted(self.pct_below, reverse=True)]
        out.append(("2sigma (m)", self.two_sigma))
        for i, w in enumerate(self.windows, 1):
            out.append((f"outage {i} RMS (m)", w.rms))
            out.append((f"outage {i} Max (m)", w.max))
        return out


def _fmt_threshold(th: float) -> str:
    return f"{th * 100:g} cm" if th < 1.0 else f"{th:g} m"


def summarize(
    errors: ArrayLike,
    t: ArrayLike | None = None,
    windows: Sequence[tuple[float, float]] = (),
    tail: float = 0.0,
    thresholds: Sequence[float] = THRESHOLDS,
) -> ErrorStats:
    """Summary statistics of an error series.

    ``windows`` are ``(start, duration)`` pairs; each is evaluated over
    ``[start, start + duration + tail]`` and needs ``t``. Coverage is the
    share of epochs strictly below each threshold, in percent.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("summarize needs at least one error value")
    ws = []
    if windows:
        if t is None:
            raise ValueError("per-window statistics need epoch times")
        t = np.asarray(t, dtype=np.float64)
        for start, dur in windows:
            m = (t >= start) & (t <= start + dur + tail)
            ew = e[m]
            if ew.size:
                ws.append(WindowStats(start, start + dur, int(ew.size), _rms(ew), float(ew.max())))
            else:
                ws.append(WindowStats(start, start + dur, 0, math.nan, math.nan))
    return ErrorStats(
        n=int(e.size),
        rms=_rms(e),
        max=float(e.max()),
        mean=float(e.mean()),
        median=float(np.median(e)),
        two_sigma=two_sigma(e),
        pct_below={float(th): 100.0 * float(np.count_nonzero(e < th)) / e.size for th in thresholds},
        windows=ws,
    )


def _rms(e: NDArray[np.float64]) -> float:
    # scaled by the largest magnitude so tiny errors do not underflow when squared
    m = float(np.max(np.abs(e)))
    if m == 0.0 or not math.isfinite(m):
        return m
    r = e / m
    return m * math.sqrt(float(np.mean(r * r)))


def cdf_points(errors: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Empirical CDF as sorted errors and cumulative fractions ``i / n``."""
    e = np.sort(np.asarray(errors, dtype=np.float64))
    if e.size == 0:
        raise ValueError("cdf_points needs at least one error value")
    return e, np.arange(1, e.size + 1, dtype=np.float64) / e.size


def _table(columns: Mapping[str, ErrorStats]) -> tuple[list[str], list[list[float]]]:
    names = list(columns)
    if not names:
        raise ValueError("no columns to tabulate")
    row_sets = [columns[n].rows() for n in names]
    labels = [label for label, _ in max(row_sets, key=len)]
    values = []
    for label in labels:
        values.append([dict(rs).get(label, math.nan) for rs in row_sets])
    return labels, values


def stats_csv(columns: Mapping[str, ErrorStats]) -> str:
    """Stats table as CSV text: one metric per row, one column per run."""
    labels, values = _table(columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", *columns])
    for label, row in zip(labels, values):
        w.writerow([label, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def stats_text(columns: Mapping[str, ErrorStats], digits: int = 3) -> str:
    """Stats table as aligned plain text."""
    labels, values = _table(columns)
    cells = [[f"{v:.{digits}f}" for v in row] for row in values]
    lw = max(len("metric"), *(len(s) for s in labels))
    cw = [max(len(n), *(len(r[i]) for r in cells)) for i, n in enumerate(columns)]
    lines = ["  ".join(["metric".ljust(lw), *(n.rjust(c) for n, c in zip(columns, cw))])]
    for label, row in zip(labels, cells):
        lines.append("  ".join([label.ljust(lw), *(v.rjust(c) for v, c in zip(row, cw))]))
    return "\n".join(lines) + "\n"


def cdf_csv(columns: Mapping[str, ArrayLike]) -> str:
    """Long-format CDF CSV: ``run,error_m,fraction``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "error_m", "fraction"])
    for name, errors in columns.items():
        e, f = cdf_points(errors)
        for a, b in zip(e, f):
            w.writerow([name, repr(float(a)), repr(float(b))])
    return buf.getvalue()
