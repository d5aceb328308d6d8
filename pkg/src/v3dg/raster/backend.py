"""Kernel backend selection: compiled extension when importable, numpy
fallback otherwise. V3DG_BACKEND=python|compiled forces a choice."""

from __future__ import annotations

import os

from . import _py_kernels

_COMPILED = None
try:
    from . import _kernels as _COMPILED  # type: ignore[no-redef]
except ImportError:
    _COMPILED = None


def available_backends():
    names = ["python"]
    if _COMPILED is not None:
        names.insert(0, "compiled")
    return names


def get_kernels(name: str):
    if name == "python":
        return _py_kernels
    if name == "compiled":
        if _COMPILED is None:
            raise RuntimeError("compiled kernels are not built")
        return _COMPILED
    raise ValueError(f"unknown backend {name!r}")


def kernels():
    forced = os.environ.get("V3DG_BACKEND")
    if forced:
        return get_kernels(forced)
    return _COMPILED if _COMPILED is not None else _py_kernels


def active_backend() -> str:
    return kernels().BACKEND_NAME
