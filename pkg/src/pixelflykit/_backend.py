"""Kernel backend selection.

The compiled extension is used when it imports cleanly; set
``PIXELFLYKIT_PURE_PYTHON=1`` to force the NumPy fallback.
``PIXELFLYKIT_THREADS`` caps the threads used by parallel kernels.
"""
import os

from . import _kernels_py

if os.environ.get("PIXELFLYKIT_PURE_PYTHON"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Return the kernel module for ``name`` ('compiled' or 'python'), or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def thread_count():
    raw = os.environ.get("PIXELFLYKIT_THREADS")
    if not raw:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
