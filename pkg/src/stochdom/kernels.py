"""Kernel backend selection.

The compiled extension is used when it was built; set
``STOCHDOM_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("STOCHDOM_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

chain_product = _impl.chain_product
qr_steps = _impl.qr_steps
cone_push = _impl.cone_push
hilbert_diameter = _impl.hilbert_diameter
ZERO_REL_TOL = _kernels_py.ZERO_REL_TOL


def backends():
    """Available implementations keyed by name (used by tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
