"""Solver-core selection: compiled extension when available, NumPy otherwise.

The choice happens once at import.  ``TOALOC_BACKEND=python`` forces the
fallback; ``TOALOC_BACKEND=compiled`` makes a missing extension an error
instead of a silent downgrade.
"""

from __future__ import annotations

import os

from . import _kernels

_requested = os.environ.get("TOALOC_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "compiled", "python"):
    raise RuntimeError(f"TOALOC_BACKEND must be auto|compiled|python, got {_requested!r}")

_compiled = None
if _requested != "python":
    try:
        from . import _core as _compiled  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise RuntimeError(
                "TOALOC_BACKEND=compiled but the toaloc._core extension is not built"
            ) from None

HAS_COMPILED = _compiled is not None
BACKEND = "compiled" if HAS_COMPILED else "python"


def get_kernel(backend: str | None = None):
    """Kernel module for ``backend`` (None means the import-time choice)."""
    if backend is None:
        return _compiled if HAS_COMPILED else _kernels
    if backend == "python":
        return _kernels
    if backend == "compiled":
        if not HAS_COMPILED:
            raise RuntimeError("compiled backend requested but toaloc._core is not built")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
