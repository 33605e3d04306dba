"""Kernel backend selection.

Imports the compiled extension when available, otherwise the NumPy
fallback.  Set ``SHARPSTEP_KERNELS=python`` or ``SHARPSTEP_KERNELS=cython``
to force a backend (the latter raises if the extension is missing).
"""

import os

_requested = os.environ.get("SHARPSTEP_KERNELS", "").strip().lower()

if _requested in ("python", "pure"):
    from . import pure as _impl
elif _requested == "cython":
    from . import _core as _impl
elif _requested == "":
    try:
        from . import _core as _impl
    except ImportError:
        from . import pure as _impl
else:
    raise ImportError(f"unknown SHARPSTEP_KERNELS value: {_requested!r}")

BACKEND = _impl.BACKEND

uniform_fill = _impl.uniform_fill
gaussian_fill = _impl.gaussian_fill
pr_value = _impl.pr_value
pr_subgrad = _impl.pr_subgrad
cov_value = _impl.cov_value
cov_subgrad = _impl.cov_subgrad
jacobi_singular_values = _impl.jacobi_singular_values

__all__ = [
    "BACKEND",
    "uniform_fill",
    "gaussian_fill",
    "pr_value",
    "pr_subgrad",
    "cov_value",
    "cov_subgrad",
    "jacobi_singular_values",
]
