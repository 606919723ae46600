"""Kernel backend selection.

The hot per-node/per-step recursions live either in the compiled extension
(dkfsim._kernels._core, built from Cython) or in the pure-numpy fallback.
The compiled backend is preferred when importable; set DKFSIM_BACKEND=python
or DKFSIM_BACKEND=compiled to force a choice.
"""

import os

from . import _pure

try:
    from . import _core
except ImportError:  # pragma: no cover - depends on build host
    _core = None

_BACKENDS = {"python": _pure}
if _core is not None:
    _BACKENDS["compiled"] = _core

_active = None


def use_backend(name: str):
    """Select a backend by name ('python' or 'compiled'); returns the module."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]
    return _active


def get_backend():
    """The active backend module, resolving DKFSIM_BACKEND on first use."""
    global _active
    if _active is None:
        requested = os.environ.get("DKFSIM_BACKEND")
        if requested:
            use_backend(requested)
        else:
            _active = _BACKENDS.get("compiled", _pure)
    return _active


def backend_name() -> str:
    return get_backend().NAME


def available_backends() -> list:
    return sorted(_BACKENDS)


def node_info_histories(a_inv_seq, q_inv, l_all, info0):
    return get_backend().node_info_histories(a_inv_seq, q_inv, l_all, info0)


def fused_info_recursion(a_inv_seq, q_inv, info_inc, iv_inc, info0, yv0):
    return get_backend().fused_info_recursion(a_inv_seq, q_inv, info_inc, iv_inc, info0, yv0)
