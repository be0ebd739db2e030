"""Backend selection for the hot kernels.

Prefers the compiled Cython extension; falls back to pure numpy when the
extension is missing or BIOBENCH_FORCE_NUMPY=1 is set.  Both backends
expose ``stage_loglik`` and ``smo_solve`` with identical contracts.
"""

import os

from . import fallback

if os.environ.get("BIOBENCH_FORCE_NUMPY") == "1":
    _impl = fallback
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = fallback
        BACKEND = "numpy"

stage_loglik = _impl.stage_loglik
smo_solve = _impl.smo_solve


def backend_name() -> str:
    return BACKEND
