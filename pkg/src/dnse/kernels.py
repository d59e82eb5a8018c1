"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback. ``DNSE_KERNELS=python`` (or ``compiled``) forces a choice at
import; :func:`set_backend` switches at runtime (benchmarks, parity tests).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType] = {"python": _kernels_py}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels


def available() -> list[str]:
    return sorted(_BACKENDS)


def _initial() -> ModuleType:
    want = os.environ.get("DNSE_KERNELS", "auto").strip().lower()
    if want in ("", "auto"):
        return _BACKENDS.get("compiled", _kernels_py)
    if want not in _BACKENDS:
        raise ImportError(f"DNSE_KERNELS={want!r} requested but available backends are {available()}")
    return _BACKENDS[want]


_active = _initial()


def active() -> ModuleType:
    return _active


def name() -> str:
    return _active.NAME


def set_backend(backend: str) -> str:
    """Select a backend by name; returns the previously active name."""
    global _active
    if backend not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {backend!r}; available: {available()}")
    prev = _active.NAME
    _active = _BACKENDS[backend]
    return prev
