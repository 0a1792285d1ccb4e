"""Kernel backend selection.

The compiled Cython backend is used when it was built; otherwise the numpy
fallback is used. Set ``RASSWITCH_KERNELS=python`` to force the fallback.
"""

import importlib
import os

from . import _pykernels

_FORCED = os.environ.get("RASSWITCH_KERNELS", "").strip().lower()


def get_backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("rasswitch._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        get_backend("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if _FORCED == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        _impl = get_backend("cython")
        BACKEND = "cython"
    except ImportError:
        if _FORCED == "cython":
            raise
        _impl = _pykernels
        BACKEND = "python"

injections = _impl.injections
jacobian = _impl.jacobian
components = _impl.components
