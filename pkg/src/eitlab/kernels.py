"""Backend selection for the Maxwell-Bloch hot kernels.

The compiled extension is used when it imports; set ``EITLAB_PURE_PYTHON=1``
to force the numpy fallback.
"""

import math
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("EITLAB_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for active)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def cell_weights(d, h):
    """Exact integrating-factor weights for one cell of dE/dxi = -d E + f.

    With f linear across the cell,
    ``E[j+1] = decay*E[j] + wa*f[j] + wb*f[j+1]``.
    """
    x = d * h
    decay = math.exp(-x)
    w0 = -math.expm1(-x) / d
    # (1/d) * (1 - (1 - e^-x)/x), series near x=0 to avoid cancellation
    if x < 1e-4:
        wb = h * (0.5 - x / 6.0 + x * x / 24.0)
    else:
        wb = (1.0 - w0 / h) / d
    return decay, w0 - wb, wb


def sweep_fields(*args, **kwargs):
    return _impl.sweep_fields(*args, **kwargs)


def mb_rhs(*args, **kwargs):
    return _impl.mb_rhs(*args, **kwargs)
