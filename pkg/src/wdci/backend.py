"""Kernel backend selection.

WDCI_BACKEND=numba forces the jitted kernels (import error if numba is
missing), WDCI_BACKEND=numpy forces the pure-numpy fallback, anything else
("auto", unset) prefers numba when importable. The choice is fixed at import
time; it is part of the platform configuration for determinism purposes.

BLAS pools are limited to one thread: the workload is many small GEMMs
interleaved with jitted parallel regions, and multi-threaded BLAS spin-waits
starve both (measured ~4x slowdown). Set WDCI_KEEP_BLAS_THREADS=1 to opt
out.
"""

import os

if not os.environ.get("WDCI_KEEP_BLAS_THREADS"):
    try:
        from threadpoolctl import threadpool_limits

        _blas_limit = threadpool_limits(limits=1, user_api="blas")
    except ImportError:  # pragma: no cover - threadpoolctl is a declared dep
        pass

_requested = os.environ.get("WDCI_BACKEND", "auto").strip().lower()

if _requested in ("numpy", "np"):
    from . import kernels_numpy as _impl

    BACKEND = "numpy"
elif _requested == "numba":
    from . import kernels_numba as _impl

    BACKEND = "numba"
else:
    try:
        from . import kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - exercised only without numba
        from . import kernels_numpy as _impl

        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_weight = _impl.conv2d_grad_weight


def backend_name() -> str:
    return BACKEND
