"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times single calls of each kernel and one end-to-end dead-reckoning and EKF
run of the short scenario with each backend swapped in.
"""

import argparse
import math
import sys
import time
import timeit
from pathlib import Path

import numpy as np

from obmsnav import _kernels_py, kernels
from obmsnav.frames import WGS84, quat_from_attitude
from obmsnav.pipelines import inputs_from_simulation, run_pipeline
from obmsnav.scenario import load_scenario, simulate

try:
    from obmsnav import _ckernels
except ImportError:
    _ckernels = None

EARTH = kernels.earth_tuple(WGS84)
SHORT = Path(__file__).resolve().parents[1] / "scenarios" / "short_block.yaml"


def kernel_args(rng):
    x = np.zeros(15)
    x[:3] = [math.radians(43.65), math.radians(-79.38), 80.0]
    x[3:6] = rng.normal(0, 5, 3)
    x[6:9] = [0.01, -0.02, 1.0]
    f = rng.normal(0, 1, 3) + [0, 0, 9.8]
    w = rng.normal(0, 0.1, 3)
    A = rng.normal(size=(15, 15))
    P = A @ A.T * 1e-4
    Qd = np.diag(rng.uniform(0, 1e-6, 15))
    return x, f, w, P, Qd


def per_call_us(fn, repeat):
    n = 2000
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n * 1e6


def use_backend(mod):
    kernels.impl = mod
    kernels.nav_step, kernels.predict_step, kernels.propagate_cov = mod.nav_step, mod.predict_step, mod.propagate_cov


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1

    x, f, w, P, Qd = kernel_args(np.random.default_rng(0))
    q = quat_from_attitude(x[6:9])
    beta = np.full(6, 1 / 600)
    Phi = np.eye(15) + 1e-3
    backends = {"python": _kernels_py, "cython": _ckernels}
    calls = {
        "nav_step": lambda m: m.nav_step(x[:3], x[3:6], q, f, w, 0.05, EARTH),
        "predict_step": lambda m: m.predict_step(x, P, f, w, 0.05, beta, Qd, False, EARTH),
        "propagate_cov": lambda m: m.propagate_cov(P, Phi, Qd),
    }
    print(f"{'kernel':<16}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, call in calls.items():
        t = {b: per_call_us(lambda m=m: call(m), args.repeat) for b, m in backends.items()}
        print(f"{name:<16}{t['python']:>12.2f}{t['cython']:>12.2f}{t['python'] / t['cython']:>9.1f}x")

    inp = inputs_from_simulation(simulate(load_scenario(SHORT)))
    print(f"\n{'pipeline':<16}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    original = kernels.impl
    try:
        for name in ("ins-only", "5g-obms"):
            t = {}
            for b, m in backends.items():
                use_backend(m)
                t0 = time.perf_counter()
                run_pipeline(name, inp)
                t[b] = time.perf_counter() - t0
            print(f"{name:<16}{t['python']:>12.2f}{t['cython']:>12.2f}{t['python'] / t['cython']:>9.1f}x")
    finally:
        use_backend(original)
    return 0


if __name__ == "__main__":
    sys.exit(main())
