"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy/scipy
fallback is used. Set ``CHEMO4D_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("CHEMO4D_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"


def get_kernels(name=None):
    """Return the kernel module for ``name`` ('cython' or 'python'); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
