"""Hot per-point kernels with a compiled core and a NumPy fallback.

The native Cython backend is preferred when importable; setting the
environment variable ``ATLASFUSE_PURE_PYTHON=1`` forces the fallback.
Both backends are arithmetically identical.
"""

from __future__ import annotations

import os

from . import _python

if os.environ.get("ATLASFUSE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _python
    BACKEND = "python"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = _python
        BACKEND = "python"

VOXEL_COORD_LIMIT = _python.VOXEL_COORD_LIMIT

transform_points = _impl.transform_points
project_points = _impl.project_points
depth_z_buffer = _impl.depth_z_buffer
voxel_first_indices = _impl.voxel_first_indices
solve_assignment = _impl.solve_assignment


def available_backends() -> dict:
    """Importable backend modules keyed by name (for parity tests and benchmarks)."""
    backends = {"python": _python}
    try:
        from . import _native

        backends["native"] = _native
    except ImportError:
        pass
    return backends
