"""Optional numba acceleration.

Kernels decorated with :func:`maybe_njit` are compiled with ``numba.njit`` unless
numba is missing or ``THERMOFIELD_DISABLE_JIT`` is set to a truthy value, in which
case the plain Python function is used. Every kernel also has a vectorised numpy
counterpart in :mod:`thermofield.kernels`; ``use_jit()`` picks between them.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}


def _env_disabled() -> bool:
    return os.environ.get("THERMOFIELD_DISABLE_JIT", "").strip().lower() not in _FALSY


try:  # pragma: no cover - depends on environment
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

JIT_ENABLED = HAVE_NUMBA and not _env_disabled()


def use_jit() -> bool:
    return JIT_ENABLED


def maybe_njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity otherwise."""

    def wrap(fn):
        if JIT_ENABLED:
            return numba.njit(cache=True, **kwargs)(fn)
        return fn

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap
