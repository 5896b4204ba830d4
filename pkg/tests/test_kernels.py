import numpy as np
import pytest

from obmsnav import _kernels_py, kernels
from obmsnav.frames import WGS84, quat_from_attitude
from obmsnav.fusion import assemble_phi
from obmsnav.sensors import SensorSpec
from support import phi_mismatch, random_imu, random_state

try:
    from obmsnav import _ckernels
except ImportError:  # extension not built
    _ckernels = None

EARTH = kernels.earth_tuple(WGS84)


def test_backend_reported():
    assert kernels.backend in ("cython", "python")


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
def test_compiled_nav_step_matches_python():
    rng = np.random.default_rng(3)
    for _ in range(200):
        x = random_state(rng)
        f, w = random_imu(rng)
        q = quat_from_attitude(x[6:9])
        a = _kernels_py.nav_step(x[:3], x[3:6], q, f, w, 0.05, EARTH)
        b = _ckernels.nav_step(x[:3], x[3:6], q, f, w, 0.05, EARTH)
        for u, v in zip(a, b):
            np.testing.assert_allclose(np.asarray(v), np.asarray(u), rtol=1e-13, atol=1e-15)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
@pytest.mark.parametrize("frozen", [False, True])
def test_compiled_predict_matches_python(frozen):
    rng = np.random.default_rng(4)
    beta = np.full(6, 1 / 600)
    for _ in range(100):
        x = random_state(rng)
        f, w = random_imu(rng)
        A = rng.normal(size=(15, 15))
        P = A @ A.T * 1e-4
        Qd = np.diag(rng.uniform(0, 1e-6, 15))
        xa, Pa, Fa = _kernels_py.predict_step(x, P, f, w, 0.05, beta, Qd, frozen, EARTH)
        xb, Pb, Fb = _ckernels.predict_step(x, P, f, w, 0.05, beta, Qd, frozen, EARTH)
        np.testing.assert_allclose(np.asarray(xb), xa, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(np.asarray(Fb), Fa, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(np.asarray(Pb), Pa, rtol=1e-11, atol=1e-16)
        assert np.array_equal(np.asarray(Pb), np.asarray(Pb).T)


@pytest.mark.parametrize("seed", range(5))
def test_phi_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    spec = SensorSpec()
    x = random_state(rng)
    f, w = random_imu(rng)
    assert phi_mismatch(x, f, w, spec, 0.05) <= 1.0


def test_phi_identity_at_zero_step():
    rng = np.random.default_rng(5)
    f, w = random_imu(rng)
    assert np.array_equal(assemble_phi(random_state(rng), f, w, SensorSpec(), 0.0), np.eye(15))


def test_phi_structure():
    rng = np.random.default_rng(6)
    spec = SensorSpec(beta_gyro=0.01, beta_accel=0.02)
    x = random_state(rng)
    f, w = random_imu(rng)
    Phi = assemble_phi(x, f, w, spec, 0.05)
    assert np.all(Phi[9:15, :9] == 0.0)
    np.testing.assert_allclose(np.diag(Phi[9:15, 9:15]), [1 - 0.01 * 0.05] * 3 + [1 - 0.02 * 0.05] * 3, rtol=1e-15)
    assert np.count_nonzero(Phi[9:15, 9:15] - np.diag(np.diag(Phi[9:15, 9:15]))) == 0
