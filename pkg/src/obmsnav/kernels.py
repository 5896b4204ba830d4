"""Kernel selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_kernels_py`` is used. Set ``OBMSNAV_PURE_PYTHON=1``
to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

backend = "python"
impl = _kernels_py

if not os.environ.get("OBMSNAV_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        impl = _ckernels
        backend = "cython"

nav_step = impl.nav_step
predict_step = impl.predict_step
propagate_cov = impl.propagate_cov


def earth_tuple(earth) -> tuple[float, float, float, float, float, float]:
    return (earth.a, earth.e2, earth.omega_e, earth.g_equator, earth.g_k, earth.free_air)
