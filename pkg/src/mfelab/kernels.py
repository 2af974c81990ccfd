"""Hot stencil kernels: numba fast path with a pure-numpy fallback.

The backend is picked at import time from the ``MFE_NUMBA`` environment
variable (``0``/``false``/``off`` forces numpy) and can be switched at
runtime with :func:`set_backend`.  Both paths accumulate per node in the
same order and all reductions stay in numpy, so results are bit-identical
across backends.  ``MFE_NUM_THREADS`` caps the numba thread pool.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_BACKEND = "MFE_NUMBA"
_ENV_THREADS = "MFE_NUM_THREADS"


def _env_wants_numba() -> bool:
    return os.environ.get(_ENV_BACKEND, "1").strip().lower() not in ("0", "false", "off", "no")


try:
    import numba
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    njit = None
    _HAVE_NUMBA = False

if _HAVE_NUMBA and _ENV_THREADS in os.environ:
    try:
        numba.set_num_threads(max(1, int(os.environ[_ENV_THREADS])))
    except ValueError:
        pass

_backend = "numba" if (_HAVE_NUMBA and _env_wants_numba()) else "numpy"


def available_backends() -> tuple[str, ...]:
    return ("numpy", "numba") if _HAVE_NUMBA else ("numpy",)


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select the stencil backend ("numpy" or "numba")."""
    global _backend
    if name not in available_backends():
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _backend = name


def _stencil_apply_numpy(diag, coef, idx, vpad, out):
    out[:] = diag * vpad[:-1]
    for k in range(coef.shape[1]):
        out += coef[:, k] * vpad[idx[:, k]]
    return out


if _HAVE_NUMBA:

    @njit(cache=True)
    def _stencil_apply_numba(diag, coef, idx, vpad, out):  # pragma: no cover - jitted
        n = diag.shape[0]
        k = coef.shape[1]
        for i in range(n):
            acc = diag[i] * vpad[i]
            for j in range(k):
                acc += coef[i, j] * vpad[idx[i, j]]
            out[i] = acc
        return out


def stencil_apply(diag, coef, idx, values, out=None):
    """Apply ``A v`` where ``A`` has per-node diagonal plus indexed couplings.

    ``idx`` entries equal to ``len(values)`` address a zero pad slot and
    encode Dirichlet (value 0) neighbours.
    """
    n = values.shape[0]
    vpad = np.empty(n + 1, dtype=np.float64)
    vpad[:n] = values
    vpad[n] = 0.0
    if out is None:
        out = np.empty(n, dtype=np.float64)
    if _backend == "numba":
        return _stencil_apply_numba(diag, coef, idx, vpad, out)
    return _stencil_apply_numpy(diag, coef, idx, vpad, out)
