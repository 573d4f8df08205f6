"""Kernel backend selection.

The compiled Cython kernels are used when importable.  Set
``MANIFOLD_TRACK_BACKEND=python`` to force the NumPy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_AVAILABLE = {"python": _pykernels}
if _ckernels is not None:
    _AVAILABLE["cython"] = _ckernels

kernels = _pykernels


def available():
    return sorted(_AVAILABLE)


def set_backend(name):
    """Switch the active kernel module; returns the previous backend name."""
    global kernels
    if name not in _AVAILABLE:
        raise ValueError(f"backend {name!r} not available (have {available()})")
    prev = kernels.NAME
    kernels = _AVAILABLE[name]
    return prev


def get_backend():
    return kernels.NAME


_requested = os.environ.get("MANIFOLD_TRACK_BACKEND", "").strip().lower()
if _requested:
    set_backend(_requested)
elif _ckernels is not None:
    kernels = _ckernels
