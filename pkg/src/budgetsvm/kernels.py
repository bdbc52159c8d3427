"""Backend selection for the hot loops.

The compiled extension ``budgetsvm._ckernels`` is used when it imports;
otherwise the pure-Python ``budgetsvm._pykernels`` takes over. Setting
``BUDGETSVM_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available():
    return sorted(_BACKENDS)


def _default():
    forced = os.environ.get("BUDGETSVM_BACKEND")
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(f"BUDGETSVM_BACKEND={forced!r} is not available ({available()})")
        return _BACKENDS[forced]
    return _BACKENDS.get("cython", _pykernels)


DEFAULT = _default()
if DEFAULT is _pykernels:
    log.debug("compiled kernels unavailable, using the pure-Python fallback")


def get(backend=None):
    """Resolve ``None``, a backend name, or a backend module."""
    if backend is None:
        return DEFAULT
    if isinstance(backend, str):
        try:
            return _BACKENDS[backend]
        except KeyError:
            raise ValueError(f"unknown backend {backend!r}; available: {available()}") from None
    return backend
