"""Backend selection for the numerical kernels.

The compiled extension ``casmore._kernels`` is used when it was built; the
pure-Python module ``casmore._kernels_py`` is the fallback.  Setting the
environment variable ``CASMORE_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

MEAN = _kernels_py.MEAN
COV = _kernels_py.COV
JOINT = _kernels_py.JOINT


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()

if _compiled is not None and os.environ.get("CASMORE_PURE_PYTHON", "") in ("", "0"):
    _impl: ModuleType = _compiled
    BACKEND = "cython"
else:
    _impl = _kernels_py
    BACKEND = "python"

solve_multiplier = _impl.solve_multiplier
quadratic_features = _impl.quadratic_features


def available_backends() -> dict[str, ModuleType]:
    backends = {"python": _kernels_py}
    if _compiled is not None:
        backends["cython"] = _compiled
    return backends
