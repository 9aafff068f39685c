"""Kernel backend selection: compiled extension with a NumPy fallback.

The compiled module is chosen at import when available. ``set_backend``
exists for the benchmark and parity tests; the two backends agree to
floating-point reordering, so determinism guarantees (bit-identical output
for a given seed and worker count) hold within a backend.
"""

from __future__ import annotations

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # pure-Python install
    _compiled = None

_ACTIVE = _compiled if _compiled is not None else _kernels_py


def has_compiled() -> bool:
    return _compiled is not None


def backend_name() -> str:
    return "compiled" if _ACTIVE is _compiled else "python"


def set_backend(name: str) -> None:
    """Force a backend: 'compiled', 'python', or 'auto'."""
    global _ACTIVE
    if name == "python":
        _ACTIVE = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this install")
        _ACTIVE = _compiled
    elif name == "auto":
        _ACTIVE = _compiled if _compiled is not None else _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")


def kernels():
    return _ACTIVE
