"""Backend switch for the hot numeric kernels.

Kernels come in two flavours: numba-compiled loops and vectorised numpy.
Set ``PROJECTILE_SPLAT_BACKEND=numpy`` (or ``PROJECTILE_SPLAT_DISABLE_NUMBA=1``)
before import to force the numpy path; ``set_backend`` switches at runtime.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency, kept soft here
    numba = None

_TRUTHY = {"1", "true", "yes", "on"}


def _initial_backend():
    if os.environ.get("PROJECTILE_SPLAT_DISABLE_NUMBA", "").lower() in _TRUTHY:
        return "numpy"
    name = os.environ.get("PROJECTILE_SPLAT_BACKEND", "numba").lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        return "numpy"
    return name


_backend = _initial_backend()


def get_backend():
    return _backend


def set_backend(name):
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _backend = name


def use_numba():
    return _backend == "numba"


def njit(*args, **kwargs):
    """``numba.njit`` with cache on, or a no-op decorator without numba."""
    kwargs.setdefault("cache", True)
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)
