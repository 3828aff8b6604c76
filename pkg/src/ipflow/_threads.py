"""BLAS thread-pool control for the solver's many tiny dense kernels.

The normal matrices here are a few hundred rows at most; multi-threaded
BLAS dispatch costs far more than the arithmetic (60x slowdowns were
measured), so the first small factorization pins the pool to one thread
for the rest of the process.  Set IPFLOW_NO_THREAD_LIMIT=1 to opt out.
"""
from __future__ import annotations

import os

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

_applied = False


def ensure_single_thread_blas() -> None:
    """Idempotently cap BLAS pools at one thread (process-wide)."""
    global _applied
    if _applied or threadpool_limits is None:
        return
    if os.environ.get("IPFLOW_NO_THREAD_LIMIT"):
        _applied = True
        return
    threadpool_limits(limits=1, user_api="blas")
    _applied = True
