import logging
import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obmsnav.fiveg import (
    BaseStation,
    EpochMode,
    FivegMeasurement,
    FivegProcessor,
    FixMode,
    GeometryError,
    LinkState,
    ccw_to_azimuth,
    default_gamma,
    fix_covariance,
    fix_from_measurement,
    fix_stream_hash,
    fuse_multibs,
    nlos_detect,
    range_and_angles,
    switch_mode,
)
from obmsnav.frames import LocalEnu
from support import FRAME


def meas(r, aod=0.0, pwr=None, sigma_range=0.3, sigma_aod=math.radians(1.0), t=0.0, bs="bs0"):
    return FivegMeasurement(t, bs, r, aod, pwr, sigma_range, sigma_aod)


def test_three_four_five():
    r, theta, psi = range_and_angles(LocalEnu(3, 4, 0), LocalEnu(0, 0, 0))
    assert r == 5.0
    assert theta == pytest.approx(math.atan2(4, 3), abs=1e-15)
    assert theta == pytest.approx(0.9273, abs=1e-4)
    assert psi == 0.0


@pytest.mark.parametrize("ue, bs", [(LocalEnu(0, 0, 5), LocalEnu(0, 0, 0)), (LocalEnu(1, 1, 1), LocalEnu(1, 1, 1))])
def test_degenerate_geometry(ue, bs):
    with pytest.raises(GeometryError):
        range_and_angles(ue, bs)


def test_pythagoras_fix():
    bs = BaseStation("bs0", LocalEnu(0, 0, 10))
    assert fix_from_measurement(meas(26.0, aod=0.0), bs, 0.0) == pytest.approx((0.0, 24.0), abs=1e-12)


def test_fix_at_boundary_range():
    bs = BaseStation("bs0", LocalEnu(7, -3, 10))
    assert fix_from_measurement(meas(10.0, aod=1.0), bs, 0.0) == (7.0, -3.0)


def test_range_shorter_than_height_difference_rejected():
    bs = BaseStation("bs0", LocalEnu(0, 0, 10))
    with pytest.raises(GeometryError):
        fix_from_measurement(meas(9.99), bs, 0.0)


def test_round_trip_sweep():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        bs = LocalEnu(*rng.uniform(-500, 500, 2), rng.uniform(0, 40))
        ue = LocalEnu(bs[0] + rng.uniform(-300, 300), bs[1] + rng.uniform(-300, 300), rng.uniform(0, 3))
        r, theta, _ = range_and_angles(ue, bs)
        x, y = fix_from_measurement(meas(r, ccw_to_azimuth(theta)), BaseStation("b", bs), ue[2])
        assert abs(x - ue[0]) < 1e-9 and abs(y - ue[1]) < 1e-9


@pytest.mark.parametrize("theta, az", [(0.0, math.pi / 2), (math.pi / 2, 0.0), (math.pi, 1.5 * math.pi), (-math.pi / 2, math.pi)])
def test_ccw_to_azimuth(theta, az):
    assert ccw_to_azimuth(theta) == pytest.approx(az, abs=1e-15)


def test_fix_covariance_axes():
    bs = BaseStation("bs0", LocalEnu(0, 0, 0))
    m = meas(100.0, aod=0.0, sigma_range=0.5, sigma_aod=0.01)
    c = fix_covariance(m, bs, 0.0)
    # bearing due north: range along y, angle across along x
    np.testing.assert_allclose(c, [[1.0, 0.0], [0.0, 0.25]], atol=1e-15)


@pytest.mark.parametrize("rtt, pwr, gamma, expected", [(100, 100, 1e-6, LinkState.LOS), (100, 135, 20, LinkState.NLOS), (100, 119, 20, LinkState.LOS)])
def test_nlos_examples(rtt, pwr, gamma, expected):
    assert nlos_detect(meas(rtt, pwr=pwr), gamma) is expected


def test_missing_power_range(caplog):
    with caplog.at_level(logging.WARNING):
        assert nlos_detect(meas(100.0), 5.0) is LinkState.LOS
    assert caplog.records
    assert nlos_detect(meas(100.0), 5.0, missing_as_los=False) is LinkState.NLOS


@given(st.floats(1, 500), st.floats(-100, 100), st.floats(0.01, 50), st.floats(0, 50))
def test_nlos_monotone_in_gamma(r, excess, gamma, dg):
    m = meas(r, pwr=r + excess)
    if nlos_detect(m, gamma) is LinkState.LOS:
        assert nlos_detect(m, gamma + dg) is LinkState.LOS


def test_false_positive_rate_monte_carlo():
    rng = np.random.default_rng(12)
    n, s_r, s_p = 100_000, 0.5, 3.0
    gamma = default_gamma(s_r, s_p)
    assert gamma == pytest.approx(5 * math.hypot(0.5, 3.0))
    truth = rng.uniform(20, 300, n)
    rtt = truth + rng.normal(0, s_r, n)
    pwr = truth + rng.normal(0, s_p, n)
    flagged = sum(nlos_detect(meas(a, pwr=b), gamma) is LinkState.NLOS for a, b in zip(rtt, pwr))
    assert flagged / n < 0.01


def test_fuse_single_fix_unchanged():
    c = np.array([[2.0, 0.3], [0.3, 1.0]])
    mean, cov = fuse_multibs([(3.0, -4.0, c)])
    np.testing.assert_array_equal(mean, [3.0, -4.0])
    np.testing.assert_array_equal(cov, c)


def test_fuse_equal_weights():
    mean, cov = fuse_multibs([(0.0, 0.0, np.eye(2)), (2.0, 0.0, np.eye(2))])
    np.testing.assert_allclose(mean, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(cov, 0.5 * np.eye(2), atol=1e-15)


def test_fuse_empty():
    assert fuse_multibs([]) is None


def random_fixes(rng, k):
    out = []
    for _ in range(k):
        a = rng.normal(size=(2, 2))
        out.append((*rng.uniform(-50, 50, 2), a @ a.T + 0.1 * np.eye(2)))
    return out


def test_fuse_matches_stacked_least_squares():
    rng = np.random.default_rng(13)
    fixes = random_fixes(rng, 3)
    # whiten each fix and solve the stacked system directly
    rows, rhs = [], []
    for x, y, c in fixes:
        w = np.linalg.cholesky(np.linalg.inv(c)).T
        rows.append(w)
        rhs.append(w @ [x, y])
    A, b = np.vstack(rows), np.concatenate(rhs)
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    mean, cov = fuse_multibs(fixes)
    np.testing.assert_allclose(mean, sol, rtol=0, atol=1e-10)
    np.testing.assert_allclose(cov, np.linalg.inv(A.T @ A), rtol=0, atol=1e-10)


def test_fuse_permutation_invariant_and_shrinks_cov():
    rng = np.random.default_rng(14)
    fixes = random_fixes(rng, 4)
    ref_mean, ref_cov = fuse_multibs(fixes)
    for perm in permutations(fixes):
        mean, cov = fuse_multibs(list(perm))
        np.testing.assert_allclose(mean, ref_mean, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(cov, ref_cov, rtol=1e-12, atol=1e-15)
    for _, _, c in fixes:
        assert np.min(np.linalg.eigvalsh(c - ref_cov)) >= -1e-12


@pytest.mark.parametrize(
    "states, expected",
    [
        ([LinkState.NLOS] * 3, EpochMode.INS_ONLY),
        ([LinkState.LOS, LinkState.NLOS, LinkState.NLOS], EpochMode.FUSED),
        ([], EpochMode.INS_ONLY),
    ],
)
def test_switch_mode(states, expected):
    assert switch_mode(states) is expected


def _processor():
    stations = {"a": BaseStation("a", LocalEnu(0, 0, 10)), "b": BaseStation("b", LocalEnu(200, 0, 10))}
    return FivegProcessor(stations, FRAME, h_ue=1.5)


def _exact(proc, bs_id, ue, t=0.0, excess=0.0):
    r, theta, _ = range_and_angles(ue, proc.stations[bs_id].pos)
    return FivegMeasurement(t, bs_id, r, ccw_to_azimuth(theta), r + excess, 0.3, math.radians(1.0))


def test_processor_recovers_position():
    proc = _processor()
    ue = LocalEnu(80.0, 30.0, 1.5)
    fix = proc.process_epoch(0.0, [_exact(proc, "a", ue), _exact(proc, "b", ue)])
    assert fix.mode is FixMode.LOS and fix.epoch_mode is EpochMode.FUSED
    assert fix.n_bs_used == 2
    np.testing.assert_allclose(FRAME.to_local(fix.pos), ue, atol=1e-6)
    assert np.all(np.linalg.eigvalsh(fix.cov) > 0)
    np.testing.assert_array_equal(fix.cov, fix.cov.T)


def test_processor_total_nlos():
    proc = _processor()
    ue = LocalEnu(80.0, 30.0, 1.5)
    fix = proc.process_epoch(0.0, [_exact(proc, "a", ue, excess=50), _exact(proc, "b", ue, excess=50)])
    assert fix.mode is FixMode.TOTAL_NLOS and fix.epoch_mode is EpochMode.INS_ONLY
    assert fix.pos is None and fix.n_bs_used == 0 and fix.n_bs_visible == 2


def test_processor_drops_only_nlos_bs():
    proc = _processor()
    ue = LocalEnu(80.0, 30.0, 1.5)
    fix = proc.process_epoch(0.0, [_exact(proc, "a", ue), _exact(proc, "b", ue, excess=50)])
    assert fix.n_bs_used == 1
    np.testing.assert_allclose(FRAME.to_local(fix.pos), ue, atol=1e-6)


def test_processor_groups_epochs_and_hash_is_stable():
    proc = _processor()
    ue = LocalEnu(80.0, 30.0, 1.5)
    ms = [_exact(proc, b, ue, t=t) for t in (0.0, 0.2, 0.4) for b in ("a", "b")]
    fixes = proc.process(ms)
    assert [f.t for f in fixes] == [0.0, 0.2, 0.4]
    assert fix_stream_hash(fixes) == fix_stream_hash(_processor().process(ms))
    with pytest.raises(ValueError):
        proc.process(ms[::-1])


def test_unknown_station():
    proc = _processor()
    with pytest.raises(KeyError):
        proc.process_epoch(0.0, [meas(50.0, pwr=50.0, bs="zz")])


def test_measurement_validation_and_record_round_trip():
    with pytest.raises(ValueError):
        meas(0.0)
    with pytest.raises(ValueError):
        meas(10.0, sigma_range=0.0)
    m = FivegMeasurement(1.2, "bs3", 42.0, 0.5, 43.0, 0.3, 0.02, True)
    assert FivegMeasurement.from_record(m.to_record()) == m
