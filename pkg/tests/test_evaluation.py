import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obmsnav.evaluation import (
    ExtrapolationError,
    cdf_csv,
    cdf_points,
    error_series,
    interpolate_truth,
    stats_csv,
    stats_text,
    summarize,
    two_sigma,
)
from support import FRAME

errors_lists = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=200)
# positions pass through radians; one latitude ulp is about 0.7 nm on the ground
GEODETIC_TOL = 1e-8


def straight_truth(rate=5.0, seconds=20.0, v=(6.0, -3.0, 0.0)):
    t = np.arange(int(seconds * rate) + 1) / rate
    enu = np.outer(t, v) + [10.0, 20.0, 0.0]
    return t, FRAME.to_geodetic_array(enu), enu


def test_estimate_equal_to_truth():
    t, geo, _ = straight_truth()
    es = error_series(t, geo, t, geo, FRAME)
    assert np.all(es.e3d == 0) and np.all(es.e2d == 0)


def test_constant_east_offset():
    t, geo, enu = straight_truth()
    est = FRAME.to_geodetic_array(enu + [3.0, 0.0, 0.0])
    es = error_series(t, est, t, geo, FRAME)
    np.testing.assert_allclose(es.e3d, 3.0, rtol=0, atol=GEODETIC_TOL)
    np.testing.assert_allclose(es.enu[:, 0], 3.0, rtol=0, atol=GEODETIC_TOL)


def test_interpolation_between_truth_samples():
    t, geo, enu = straight_truth(rate=5.0)
    te = np.arange(0.0, 20.0, 0.05) + 0.013
    te = te[te <= t[-1]]
    enu_est = np.outer(te, [6.0, -3.0, 0.0]) + [10.0, 20.0, 0.0]
    assert np.max(np.abs(interpolate_truth(te, t, enu) - enu_est)) < 1e-9
    es = error_series(te, FRAME.to_geodetic_array(enu_est), t, geo, FRAME)
    assert np.max(es.e3d) < GEODETIC_TOL


@pytest.mark.parametrize("te", [[-0.5, 1.0], [1.0, 20.5]])
def test_extrapolation_rejected(te):
    t, _, enu = straight_truth()
    with pytest.raises(ExtrapolationError):
        interpolate_truth(np.array(te), t, enu)


def test_three_four_example():
    s = summarize([3.0, 4.0])
    assert s.rms == pytest.approx(math.sqrt(12.5), rel=1e-15)
    assert s.rms == pytest.approx(3.536, abs=1e-3)
    assert s.max == 4.0


def test_constant_errors():
    s = summarize(np.full(50, 0.1))
    assert s.pct_below[0.3] == 100.0 and s.pct_below[1.0] == 100.0 and s.pct_below[2.0] == 100.0
    assert s.two_sigma == 0.1


def test_coverage_is_strict():
    s = summarize([0.3, 0.29, 1.0, 2.5])
    assert s.pct_below[0.3] == 25.0
    assert s.pct_below[1.0] == 50.0
    assert s.pct_below[2.0] == 75.0


def test_two_sigma_matches_sorting_oracle():
    rng = np.random.default_rng(30)
    e = rng.exponential(0.2, 100_000)
    srt = np.sort(e)
    assert two_sigma(e) == srt[math.ceil(0.95 * len(e)) - 1]


@given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=200, unique=True))
def test_cdf_at_two_sigma(errors):
    """Distinct values; ties make the empirical CDF jump past the bracket."""
    e, f = cdf_points(errors)
    n = len(e)
    frac = np.count_nonzero(e <= two_sigma(errors)) / n
    assert 0.95 <= frac <= 0.95 + 1.0 / n


def test_cdf_examples():
    e, f = cdf_points([5.0])
    assert list(f) == [1.0]
    e, f = cdf_points([3.0, 1.0, 2.0])
    assert list(e) == [1.0, 2.0, 3.0]
    np.testing.assert_allclose(f, [1 / 3, 2 / 3, 1.0])


@given(errors_lists)
def test_cdf_monotone(errors):
    e, f = cdf_points(errors)
    assert np.all(np.diff(e) >= 0) and np.all(np.diff(f) > 0) and f[-1] == 1.0


@given(errors_lists, st.randoms())
def test_summary_permutation_invariant(errors, rnd):
    shuffled = list(errors)
    rnd.shuffle(shuffled)
    a, b = summarize(errors), summarize(shuffled)
    assert a.max == b.max and a.two_sigma == b.two_sigma and a.median == b.median
    assert a.pct_below == b.pct_below
    assert a.rms == pytest.approx(b.rms, rel=1e-12)


@given(errors_lists)
def test_summary_orderings(errors):
    s = summarize(errors)
    assert s.rms >= s.mean * (1 - 1e-12)
    assert s.max >= s.two_sigma >= s.median
    assert s.pct_below[0.3] <= s.pct_below[1.0] <= s.pct_below[2.0]


def test_window_stats_with_tail():
    t = np.arange(0, 10.0, 1.0)
    e = np.arange(10.0)
    s = summarize(e, t, windows=[(2.0, 3.0)])
    w = s.windows[0]
    assert (w.n, w.max) == (4, 5.0)
    assert w.rms == pytest.approx(math.sqrt(np.mean(np.array([2.0, 3, 4, 5]) ** 2)))
    assert summarize(e, t, windows=[(2.0, 3.0)], tail=2.0).windows[0].max == 7.0


def test_windows_need_times():
    with pytest.raises(ValueError):
        summarize([1.0], windows=[(0.0, 1.0)])
    with pytest.raises(ValueError):
        summarize([])


def test_tables():
    a, b = summarize([0.1, 0.2, 0.5]), summarize([1.5, 2.5, 3.0])
    rows = list(csv.reader(io.StringIO(stats_csv({"obms": a, "cv": b}))))
    assert rows[0] == ["metric", "obms", "cv"]
    labels = [r[0] for r in rows[1:]]
    assert labels == ["RMS (m)", "Max (m)", "<2 m (%)", "<1 m (%)", "<30 cm (%)", "2sigma (m)"]
    assert float(rows[2][1]) == 0.5 and float(rows[2][2]) == 3.0
    text = stats_text({"obms": a, "cv": b})
    assert text.splitlines()[0].split() == ["metric", "obms", "cv"]
    assert len(text.splitlines()) == 7


def test_cdf_csv_long_format():
    rows = list(csv.reader(io.StringIO(cdf_csv({"a": [2.0, 1.0], "b": [3.0]}))))
    assert rows[0] == ["run", "error_m", "fraction"]
    assert rows[1:] == [["a", "1.0", "0.5"], ["a", "2.0", "1.0"], ["b", "3.0", "1.0"]]
