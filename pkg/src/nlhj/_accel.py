"""Numba acceleration switch.

Hot kernels are written twice: an explicit-loop version compiled with
``numba.njit`` and a vectorized pure-numpy twin.  Set ``NLHJ_DISABLE_NUMBA=1``
in the environment (before import) to force the numpy path; the numpy path is
also used automatically when numba is not importable.  ``benchmarks/bench_sweep.py``
compares the two.
"""

import os


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


NUMBA_DISABLED = _flag("NLHJ_DISABLE_NUMBA")

if not NUMBA_DISABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover
        numba = None
else:
    numba = None

NUMBA_ENABLED = numba is not None

prange = numba.prange if NUMBA_ENABLED else range


def maybe_njit(func=None, parallel=False):
    """Compile with numba when available and enabled, else return as-is.

    Functions decorated with this must stay numpy/scalar only so the plain
    Python version remains runnable (the numpy twins are preferred for the
    fallback; the undecorated loop versions exist for the benchmark).
    Parallel loops write disjoint slots with fixed-order inner sums, so
    results stay bit-reproducible across thread schedules.
    """
    def deco(f):
        if NUMBA_ENABLED:
            return numba.njit(cache=True, parallel=parallel)(f)
        return f

    return deco(func) if func is not None else deco
