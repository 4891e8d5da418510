"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
implementations take over. Set ``SYMDERIVE_KERNELS=python`` to force the
fallback (useful for benchmarking and differential tests), or
``SYMDERIVE_KERNELS=compiled`` to fail loudly when the extension is missing.

Callers should import this module and call ``kernels.find_first(...)`` etc.
rather than binding the functions at import time, so ``use_backend`` can
switch implementations for a whole process (the benchmark harness does this).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load_compiled() -> ModuleType:
    from . import _ckernels  # type: ignore[attr-defined]

    return _ckernels


_requested = os.environ.get("SYMDERIVE_KERNELS", "").strip().lower()

if _requested in ("python", "py", "pure"):
    _backend: ModuleType = _kernels_py
    BACKEND = "python"
elif _requested in ("", "compiled", "c"):
    try:
        _backend = _load_compiled()
        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise
        _backend = _kernels_py
        BACKEND = "python"
else:
    raise ValueError(f"unrecognized SYMDERIVE_KERNELS value: {_requested!r}")


def get_backend(name: str) -> ModuleType:
    """Return a kernel module by name ('python' or 'compiled')."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        return _load_compiled()
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name: str) -> None:
    """Rebind the module-level kernel functions to the named backend."""
    global _backend, BACKEND, match_root, find_first, find_all, encode_prefix, hamming
    _backend = get_backend(name)
    BACKEND = name
    match_root = _backend.match_root
    find_first = _backend.find_first
    find_all = _backend.find_all
    encode_prefix = _backend.encode_prefix
    hamming = _backend.hamming


match_root = _backend.match_root
find_first = _backend.find_first
find_all = _backend.find_all
encode_prefix = _backend.encode_prefix
hamming = _backend.hamming
