"""Kernel backend selection.

The hot path of every optimizer is a batch of small Hermitian solves inside
the dual ascent loop. A compiled Cython kernel is used when available; the
numpy fallback is selected otherwise. Set CRANOPT_KERNEL=numpy|cython to
force a backend (forcing cython raises if the extension is missing).
"""

import os

from . import _chol_np

_requested = os.environ.get("CRANOPT_KERNEL", "auto").lower()

_cy = None
if _requested in ("auto", "cython"):
    try:
        from . import _chol_cy as _cy  # compiled extension, may be absent
    except ImportError:
        _cy = None
        if _requested == "cython":
            raise ImportError("CRANOPT_KERNEL=cython but the compiled kernel is not available")

if _cy is not None and _requested != "numpy":
    KERNEL_NAME = "cython"
    loaded_solve = _cy.loaded_solve
    chol_solve_inplace = _cy.chol_solve_inplace
else:
    KERNEL_NAME = "numpy"
    loaded_solve = _chol_np.loaded_solve
    chol_solve_inplace = _chol_np.chol_solve_inplace


def kernel_backends():
    """Name -> module mapping of all importable kernel backends (for benchmarks/tests)."""
    out = {"numpy": _chol_np}
    if _cy is not None:
        out["cython"] = _cy
    else:
        try:
            from . import _chol_cy
            out["cython"] = _chol_cy
        except ImportError:
            pass
    return out
