"""Backend switch for the numba-compiled kernels.

Set ``BEETLENET_JIT=0`` to force the pure-numpy fallbacks. When numba is not
importable the fallbacks are used regardless of the flag.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_REQUESTED = os.environ.get("BEETLENET_JIT", "1").strip().lower() not in ("0", "false", "no", "off")
HAVE_NUMBA = numba is not None
USE_NUMBA = JIT_REQUESTED and HAVE_NUMBA


def njit(func):
    """Compile ``func`` with numba when available, else return it untouched.

    Kernels decorated here are always also callable as plain Python, which
    is how the numpy fallback tests exercise the loop versions without numba.
    """
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def set_threads(n):
    if HAVE_NUMBA and n is not None and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
