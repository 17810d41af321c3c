"""Backend selection for the hot kernels.

The compiled extension is used when importable. Setting the environment
variable ``CIMDROP_PURE_PYTHON=1`` before import forces the Python fallback.
"""
import os
from types import ModuleType

from . import _kernels_py

__all__ = [
    "BACKEND",
    "available_backends",
    "get_backend",
    "sar_walk",
    "nearest_neighbor_path",
    "two_opt_path",
    "held_karp_path",
]

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


if _compiled is not None and os.environ.get("CIMDROP_PURE_PYTHON", "") in ("", "0"):
    _impl = _compiled
    BACKEND = "compiled"
else:
    _impl = _kernels_py
    BACKEND = "python"

sar_walk = _impl.sar_walk
nearest_neighbor_path = _impl.nearest_neighbor_path
two_opt_path = _impl.two_opt_path
held_karp_path = _impl.held_karp_path
