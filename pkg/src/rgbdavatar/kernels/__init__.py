"""Hot image kernels with two interchangeable backends.

The numba backend is used by default; set the environment variable
``RGBDAVATAR_NO_NUMBA=1`` (before import) to force the pure-numpy fallback.
Both backends expose identical signatures and produce matching results, so
everything above this layer is backend-agnostic.
"""

import os

from . import _numpy

_FORCE_NUMPY = os.environ.get("RGBDAVATAR_NO_NUMBA", "").strip() not in ("", "0")

if _FORCE_NUMPY:
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _impl = _numpy
        BACKEND = "numpy"

bilateral_depth = _impl.bilateral_depth
rasterize = _impl.rasterize


def get_backend(name):
    """Return the kernel module for ``name`` ('numba' or 'numpy').

    Used by the benchmark and the cross-backend equivalence tests.
    """
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(f"unknown kernel backend: {name!r}")
