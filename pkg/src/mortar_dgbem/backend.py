"""Selection between the numba-compiled kernels and the pure-numpy fallback.

Set ``MORTAR_DGBEM_DISABLE_NUMBA=1`` to force the numpy path (also used when
numba is not importable).  ``MORTAR_DGBEM_THREADS`` caps the numba thread
count.
"""

from __future__ import annotations

import os

DISABLE_ENV = "MORTAR_DGBEM_DISABLE_NUMBA"
THREADS_ENV = "MORTAR_DGBEM_THREADS"

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # prefer OpenMP/workqueue; an outdated TBB otherwise triggers a warning on first launch
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def use_numba() -> bool:
    flag = os.environ.get(DISABLE_ENV, "").strip().lower()
    return HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


def configure_threads(n: int | None = None) -> int | None:
    """Apply ``n`` or the thread-count variable; returns the count in use (None without numba)."""
    if not HAVE_NUMBA:
        return None
    value = n if n is not None else os.environ.get(THREADS_ENV)
    if value:
        n = max(1, min(int(value), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
    return numba.get_num_threads()
