"""Backend selection for the numeric kernels.

Every hot loop in :mod:`mmrw._kernels` exists twice: a numba ``@njit``
version and a vectorised numpy version.  ``QD_NUMBA=0`` in the environment
forces the numpy path; otherwise numba is used when it imports.
"""
import contextlib
import os
import threading

try:
    import numba  # noqa: F401
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

BACKENDS = ("numba", "numpy")

_lock = threading.Lock()
_backend = None


def _default_backend():
    flag = os.environ.get("QD_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or not NUMBA_AVAILABLE:
        return "numpy"
    return "numba"


def get_backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    global _backend
    with _lock:
        if _backend is None:
            _backend = _default_backend()
        return _backend


def set_backend(name):
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not installed")
    with _lock:
        _backend = name


@contextlib.contextmanager
def use_backend(name):
    """Temporarily switch backend (process-wide)."""
    previous = get_backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
