"""Numba switch.

Kernels are compiled with numba unless ``URLLC_LAB_DISABLE_JIT`` is set to a
true value ("1", "true", "yes") or numba cannot be imported.  The flag is read
once at import time; the benchmark script flips it by spawning subprocesses.
"""

import logging
import os

logger = logging.getLogger(__name__)

_flag = os.environ.get("URLLC_LAB_DISABLE_JIT", "").strip().lower()
_disabled = _flag in ("1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError("disabled by URLLC_LAB_DISABLE_JIT")
    import numba

    njit = numba.njit
    USE_NUMBA = True
except ImportError as exc:
    if not _disabled:
        logger.warning("numba unavailable (%s); using numpy kernels", exc)

    def njit(*args, **kwargs):
        # bare @njit and @njit(...) both become no-ops
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    USE_NUMBA = False


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
