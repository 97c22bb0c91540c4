"""Hot columnar kernels: grouped reductions and variable-length gathers.

Two interchangeable backends live here: a numba @njit implementation and a
pure-numpy one.  Selection is controlled by the PLANFORGE_KERNELS env var:

    auto  (default)  numba for large inputs when importable, numpy otherwise
    numba            always numba (ImportError if unavailable)
    numpy            always the pure-numpy path

In auto mode small inputs stay on numpy: JIT dispatch overhead dominates
below roughly 16k rows.  ``planforge bench kernels`` compares the two.
"""

import os

from . import numpy_backend

# rows below this never benefit from JIT dispatch overhead
NUMBA_MIN_ROWS = 16384

_KERNEL_NAMES = (
    "grouped_sum_f64",
    "grouped_sum_i64",
    "grouped_count",
    "grouped_min_max_f64",
    "grouped_min_max_i64",
    "gather_utf8",
)

_mode = None
_numba_backend = None


def _load_numba_backend():
    global _numba_backend
    if _numba_backend is None:
        from . import numba_backend
        _numba_backend = numba_backend
    return _numba_backend


def set_backend(mode: str):
    """Override backend selection: one of auto | numba | numpy."""
    global _mode
    if mode not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown kernel backend {mode!r}")
    if mode == "numba":
        _load_numba_backend()
    _mode = mode


def current_backend() -> str:
    global _mode
    if _mode is None:
        set_backend(os.environ.get("PLANFORGE_KERNELS", "auto"))
    return _mode


def _impl(n_rows: int):
    mode = current_backend()
    if mode == "numpy":
        return numpy_backend
    if mode == "numba":
        return _load_numba_backend()
    if n_rows >= NUMBA_MIN_ROWS:
        try:
            return _load_numba_backend()
        except ImportError:
            return numpy_backend
    return numpy_backend


def grouped_sum_f64(codes, values, valid, n_groups):
    return _impl(len(codes)).grouped_sum_f64(codes, values, valid, n_groups)


def grouped_sum_i64(codes, values, valid, n_groups):
    return _impl(len(codes)).grouped_sum_i64(codes, values, valid, n_groups)


def grouped_count(codes, valid, n_groups):
    return _impl(len(codes)).grouped_count(codes, valid, n_groups)


def grouped_min_max_f64(codes, values, valid, n_groups):
    return _impl(len(codes)).grouped_min_max_f64(codes, values, valid, n_groups)


def grouped_min_max_i64(codes, values, valid, n_groups):
    return _impl(len(codes)).grouped_min_max_i64(codes, values, valid, n_groups)


def gather_utf8(offsets, data, indices):
    return _impl(len(indices)).gather_utf8(offsets, data, indices)
