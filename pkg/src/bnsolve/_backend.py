"""Backend selection for the collision quadrature hot kernel.

The compiled Cython kernel is used when available; otherwise the numpy
fallback. Override with BNSOLVE_BACKEND=cython|python (cython raises if the
extension is missing).
"""

import os

_requested = os.environ.get("BNSOLVE_BACKEND", "auto").lower()
if _requested not in ("auto", "cython", "python"):
    raise RuntimeError(f"BNSOLVE_BACKEND={_requested!r}: expected auto, cython or python")

if _requested == "python":
    from . import _collision_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _collision_cy as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _collision_py as _impl
        BACKEND = "python"

gain_loss = _impl.gain_loss
