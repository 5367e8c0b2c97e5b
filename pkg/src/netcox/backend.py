"""Selects the numerical backend at import time.

The compiled extension is preferred when importable; setting the
environment variable NETCOX_PURE_PYTHON to a non-empty value forces the
numpy fallback. Both implementations share semantics and are compared by
the parity tests and by benchmarks/bench_backends.py.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("NETCOX_PURE_PYTHON"):
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _kernels_py
    BACKEND = "python"

kernel_values = _impl.kernel_values
segment_kernel_mass = _impl.segment_kernel_mass
cox_accumulate = _impl.cox_accumulate

EPANECHNIKOV_ID = _kernels_py.EPANECHNIKOV_ID
TRIANGULAR_ID = _kernels_py.TRIANGULAR_ID
BOX_ID = _kernels_py.BOX_ID


def available_backends():
    """Name -> module map of the implementations importable here."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
