"""Backend selection for the pointwise kernels.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``BFDARCY_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementations are used.
"""

import os

import numpy as np

from . import _kernels_py

_FUNCTIONS = (
    "squared_magnitude",
    "damping_force",
    "exact_damping",
    "power_sum",
    "weighted_square_sum",
    "monotonicity_scan",
)


def _load_compiled():
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
_force_python = os.environ.get("BFDARCY_PURE_PYTHON", "") not in ("", "0")

COMPILED_AVAILABLE = _compiled is not None
BACKEND = "cython" if (COMPILED_AVAILABLE and not _force_python) else "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython" or "python"), default the active one."""
    name = name or BACKEND
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall the package")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_active = get_backend()


def _contig(u):
    return np.ascontiguousarray(u, dtype=np.float64)


def squared_magnitude(u):
    return _active.squared_magnitude(_contig(u))


def damping_force(u, a, alpha):
    return _active.damping_force(_contig(u), float(a), float(alpha))


def exact_damping(u, a, alpha, tau):
    return _active.exact_damping(_contig(u), float(a), float(alpha), float(tau))


def power_sum(u, p):
    return float(_active.power_sum(_contig(u), float(p)))


def weighted_square_sum(m2, f, alpha):
    return float(_active.weighted_square_sum(_contig(m2), _contig(f), float(alpha)))


def monotonicity_scan(U, V, alpha):
    return _active.monotonicity_scan(_contig(U), _contig(V), float(alpha))
