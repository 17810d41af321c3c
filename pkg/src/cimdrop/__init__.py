"""Bit-exact, cycle-level simulator of an SRAM compute-in-memory macro running
Monte-Carlo-Dropout inference.

The hot loops (SAR tree walks, path ordering) live in a compiled extension
with a pure-Python fallback; ``cimdrop.kernels.BACKEND`` names the one in use.
"""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
