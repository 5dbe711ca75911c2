"""Kernel backend selection.

The compiled extension is preferred. Setting ``MEDIANFIT_BACKEND=python``
before import (or calling :func:`use_backend`) forces the numpy fallback.
"""

import importlib
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

kernels = _pykernels


def _load_compiled():
    try:
        return importlib.import_module("medianfit._kernels")
    except ImportError:
        return None


def available_backends():
    names = ["python"]
    if _load_compiled() is not None:
        names.insert(0, "compiled")
    return names


def use_backend(name):
    """Switch the active kernels; returns the previous backend name."""
    global kernels
    previous = kernels.BACKEND
    if name == "python":
        kernels = _pykernels
    elif name == "compiled":
        mod = _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built; reinstall without MEDIANFIT_NO_EXT")
        kernels = mod
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def backend_name():
    return kernels.BACKEND


if os.environ.get("MEDIANFIT_BACKEND", "compiled") != "python":
    _mod = _load_compiled()
    if _mod is not None:
        kernels = _mod
    else:
        log.debug("compiled kernels unavailable, using numpy fallback")
