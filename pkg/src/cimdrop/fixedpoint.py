"""Sign-magnitude fixed-point vectors and their bitplanes.

Every operand that enters the array is a :class:`QuantVector`: a vector of
``+1/-1`` signs, unsigned magnitudes of ``n - 1`` bits and a real LSB scale.
The array only ever sees single bitplanes of the magnitudes; the digital
periphery recombines digitized partial sums with a shift-add.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "QuantVector",
    "quantize",
    "bitplane",
    "recombine",
    "per_tensor_scale",
    "max_magnitude",
    "clamp_count",
    "QuantMatrix",
    "quantize_matrix",
]


def max_magnitude(n: int) -> int:
    return (1 << (n - 1)) - 1


def per_tensor_scale(v, n: int) -> float:
    """LSB size that maps ``max|v|`` onto the largest representable magnitude.

    An all-zero tensor gets a scale of 1.0 so that quantization stays defined.
    """
    if n < 2:
        raise ValueError(f"precision must be >= 2 bits, got {n}")
    peak = float(np.max(np.abs(np.asarray(v, dtype=float)))) if np.size(v) else 0.0
    if peak == 0.0 or not np.isfinite(peak):
        return 1.0
    return peak / max_magnitude(n)


@dataclass(frozen=True)
class QuantVector:
    signs: np.ndarray
    magnitudes: np.ndarray
    precision_n: int
    scale: float = 1.0

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int64).reshape(-1)
        mags = np.asarray(self.magnitudes, dtype=np.int64).reshape(-1)
        if self.precision_n < 2:
            raise ValueError(f"precision must be >= 2 bits, got {self.precision_n}")
        if signs.shape != mags.shape:
            raise ValueError("signs and magnitudes differ in length")
        if not np.all((signs == 1) | (signs == -1)):
            raise ValueError("signs must be +1 or -1")
        if np.any(mags < 0) or np.any(mags > max_magnitude(self.precision_n)):
            raise ValueError(f"magnitudes must fit in {self.precision_n - 1} bits")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError("scale must be a positive finite number")
        signs.setflags(write=False)
        mags.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "magnitudes", mags)

    def __len__(self) -> int:
        return self.magnitudes.size

    @property
    def values(self) -> np.ndarray:
        """Signed integer values ``sign * magnitude``."""
        return self.signs * self.magnitudes

    def reconstruct(self) -> np.ndarray:
        return self.values * self.scale

    def bitplane(self, k: int) -> np.ndarray:
        return bitplane(self, k)

    @classmethod
    def from_ints(cls, values: Iterable[int], n: int, scale: float = 1.0) -> "QuantVector":
        """Build from signed integers; ``0`` becomes ``+0``."""
        vals = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.int64)
        signs = np.where(vals < 0, -1, 1)
        return cls(signs, np.abs(vals), n, scale)

    def __eq__(self, other):
        if not isinstance(other, QuantVector):
            return NotImplemented
        return (
            self.precision_n == other.precision_n
            and self.scale == other.scale
            and np.array_equal(self.signs, other.signs)
            and np.array_equal(self.magnitudes, other.magnitudes)
        )

    __hash__ = None


def quantize(v, n: int, scale: float) -> QuantVector:
    """Round-half-away-from-zero, saturating sign-magnitude quantization.

    >>> q = quantize([3.2, -1.7], 4, 1.0)
    >>> q.signs.tolist(), q.magnitudes.tolist()
    ([1, -1], [3, 2])
    """
    if n < 2:
        raise ValueError(f"precision must be >= 2 bits, got {n}")
    if not (scale > 0 and np.isfinite(scale)):
        raise ValueError("scale must be a positive finite number")
    arr = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite values")
    # sign(0) = +1, and -0.0 is treated like +0.0
    signs = np.where(arr < 0, -1, 1)
    mags = np.floor(np.abs(arr) / scale + 0.5)
    mags = np.minimum(mags, max_magnitude(n)).astype(np.int64)
    return QuantVector(signs, mags, n, scale)


def clamp_count(v, n: int, scale: float) -> int:
    """Number of elements that saturate when quantized at ``(n, scale)``."""
    arr = np.abs(np.asarray(v, dtype=float))
    return int(np.count_nonzero(np.floor(arr / scale + 0.5) > max_magnitude(n)))


def bitplane(q: QuantVector, k: int) -> np.ndarray:
    if not 0 <= k <= q.precision_n - 2:
        raise IndexError(f"plane {k} outside 0..{q.precision_n - 2}")
    return ((q.magnitudes >> k) & 1).astype(np.uint8)


def recombine(partials: Sequence[tuple[int, int]], scale: float = 1.0, n: int | None = None) -> float:
    """Shift-add digitized per-plane partial sums, then apply the LSB scale.

    ``partials`` holds ``(plane_index, partial_sum)`` pairs; partials may be
    negative (signed accumulation).
    """
    acc = 0
    for k, p in partials:
        k = int(k)
        if k < 0 or (n is not None and k > n - 2):
            raise IndexError(f"plane {k} out of range")
        acc += int(p) << k
    # python ints never wrap; guard against values no 64-bit accumulator could hold
    if acc.bit_length() > 62:
        raise OverflowError("shift-add accumulator overflow")
    return scale * acc


@dataclass(frozen=True)
class QuantMatrix:
    """Row-major quantized weights; row ``j`` feeds output neuron ``j``."""

    signs: np.ndarray
    magnitudes: np.ndarray
    precision_n: int
    scale: float = 1.0

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int64)
        mags = np.asarray(self.magnitudes, dtype=np.int64)
        if signs.ndim != 2 or signs.shape != mags.shape:
            raise ValueError("signs and magnitudes must be equal-shape 2-D arrays")
        if not np.all((signs == 1) | (signs == -1)):
            raise ValueError("signs must be +1 or -1")
        if np.any(mags < 0) or np.any(mags > max_magnitude(self.precision_n)):
            raise ValueError(f"magnitudes must fit in {self.precision_n - 1} bits")
        signs.setflags(write=False)
        mags.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "magnitudes", mags)

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitudes.shape

    @property
    def values(self) -> np.ndarray:
        return self.signs * self.magnitudes

    def bitplane(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.precision_n - 2:
            raise IndexError(f"plane {k} outside 0..{self.precision_n - 2}")
        return ((self.magnitudes >> k) & 1).astype(np.uint8)

    def row(self, j: int) -> QuantVector:
        return QuantVector(self.signs[j], self.magnitudes[j], self.precision_n, self.scale)

    def reconstruct(self) -> np.ndarray:
        return self.values * self.scale

    @classmethod
    def from_rows(cls, rows: Sequence[QuantVector]) -> "QuantMatrix":
        n = rows[0].precision_n
        return cls(np.stack([r.signs for r in rows]), np.stack([r.magnitudes for r in rows]), n, rows[0].scale)


def quantize_matrix(w, n: int, scale: float | None = None) -> QuantMatrix:
    arr = np.asarray(w, dtype=float)
    if arr.ndim != 2:
        raise ValueError("weight matrix must be 2-D")
    if scale is None:
        scale = per_tensor_scale(arr, n)
    flat = quantize(arr.reshape(-1), n, scale)
    return QuantMatrix(flat.signs.reshape(arr.shape), flat.magnitudes.reshape(arr.shape), n, scale)
