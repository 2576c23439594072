"""Kernel backend selection.

The compiled extension is used when present; set ``VINFER_PURE_PY=1`` to
force the pure Python fallback. Both backends are bit-identical, so the
choice only affects speed (see ``vinfer bench --kernels``).
"""

import os

from . import pyfallback

ACT_IDENTITY = pyfallback.ACT_IDENTITY
ACT_RELU = pyfallback.ACT_RELU
ACT_SIGMOID = pyfallback.ACT_SIGMOID

if os.environ.get("VINFER_PURE_PY"):
    _impl = pyfallback
else:
    try:
        from . import _accel as _impl
    except ImportError:
        _impl = pyfallback

forward_layer = _impl.forward_layer
recompute_node = _impl.recompute_node


def backend_name():
    return "python" if _impl is pyfallback else "cython"


def get_backend(name):
    """Explicit backend lookup, used by the kernel benchmark."""
    if name == "python":
        return pyfallback
    if name == "cython":
        from . import _accel

        return _accel
    raise ValueError(f"unknown kernel backend: {name!r}")
