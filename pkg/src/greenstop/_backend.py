"""Backend selection for the hot loops.

``GREENSTOP_BACKEND=numpy`` forces the pure-numpy implementations; the
default is ``numba`` when it imports, otherwise ``numpy``.
"""

from __future__ import annotations

import os

try:  # pragma: no cover - exercised implicitly
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    name = os.environ.get("GREENSTOP_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"GREENSTOP_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def resolve(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    backend = backend.lower()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
