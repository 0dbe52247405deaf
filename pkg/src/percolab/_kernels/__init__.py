"""Kernel backend selection.

The compiled module is used when it imports; otherwise, or when
``PERCOLAB_PURE_PYTHON=1`` is set, the pure-Python kernels are used.
"""
import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("PERCOLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend or python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

sandpile_stabilize = _active.sandpile_stabilize
arw_stabilize = _active.arw_stabilize
bootstrap_closure = _active.bootstrap_closure
label_components = _active.label_components
bfs_distance = _active.bfs_distance

__all__ = [
    "BACKEND",
    "arw_stabilize",
    "bfs_distance",
    "bootstrap_closure",
    "compiled_backend",
    "label_components",
    "python_backend",
    "sandpile_stabilize",
]
