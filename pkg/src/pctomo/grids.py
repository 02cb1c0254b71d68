"""Array containers, inner products and file I/O.

Axis convention for object volumes is ``(my, mx, mz)``: ``y`` is the
tomography axis, ``(x, z)`` span the rotation plane.  A 2D toy model is a
volume with ``my == 1``.

Intensity data is stored as ``(n_angles, ky, kx)`` where ``ky`` runs along
the tomography axis and ``kx`` along the detector row.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "GridSpec",
    "ObjectVolume",
    "IntensityData",
    "ComplexField",
    "inner_product",
    "norm",
    "write_array",
    "read_array",
    "emit_grayscale",
    "PCT1Error",
    "BadMagicError",
    "TruncatedPayloadError",
    "UnknownDtypeError",
]


@dataclass(frozen=True)
class GridSpec:
    """Voxel grid with edge length ``dx`` and wavenumber ``k``."""

    mx: int
    my: int
    mz: int
    dx: float = 1.0
    k: float = 1.0

    def __post_init__(self):
        for name in ("mx", "my", "mz"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not self.k > 0:
            raise ValueError("k must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.my, self.mx, self.mz)

    @property
    def thickness(self) -> float:
        """Object thickness L = mx * dx."""
        return self.mx * self.dx

    @classmethod
    def cube(cls, m: int, **kw) -> "GridSpec":
        return cls(mx=m, my=m, mz=m, **kw)

    @classmethod
    def toy2d(cls, m: int, **kw) -> "GridSpec":
        return cls(mx=m, my=1, mz=m, **kw)


@dataclass(frozen=True)
class ObjectVolume:
    """Complex voxel array holding N = delta - i*beta."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.shape != self.grid.shape:
            raise ValueError(f"volume shape {arr.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def delta(self) -> np.ndarray:
        return self.data.real

    @property
    def beta(self) -> np.ndarray:
        return -self.data.imag

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ObjectVolume":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))


@dataclass(frozen=True)
class IntensityData:
    """Measured or simulated intensities with optional fit weights."""

    angles: np.ndarray
    data: np.ndarray
    weights: Optional[np.ndarray] = None
    err_norm: Optional[float] = None

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float).ravel()
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[0] != angles.size:
            raise ValueError("data must have shape (n_angles, ky, kx)")
        if not np.all(np.isfinite(data)):
            raise ValueError("intensity data must be finite")
        if angles.size > 1 and np.any(np.diff(angles) <= 0):
            raise ValueError("angles must be strictly increasing")
        if angles.size and (angles.min() < 0 or angles.max() >= 2 * np.pi):
            raise ValueError("angles must lie in [0, 2pi)")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != data.shape:
                raise ValueError("weights must match data shape")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class ComplexField:
    """Lateral complex wave field (ny, nx)."""

    data: np.ndarray
    dx: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 2 or 0 in arr.shape:
            raise ValueError("field must be a nonempty 2D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field must be finite")
        object.__setattr__(self, "data", arr)


def inner_product(a, b) -> float:
    """Real inner product Re(sum(conj(a) * b))."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.real(np.vdot(a, b)))


def norm(a) -> float:
    return math.sqrt(max(inner_product(a, a), 0.0))


# ---------------------------------------------------------------------------
# PCT1 container

MAGIC = b"PCT1"
_CODES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


class PCT1Error(ValueError):
    code = 1


class BadMagicError(PCT1Error):
    code = 2


class TruncatedPayloadError(PCT1Error):
    code = 3


class UnknownDtypeError(PCT1Error):
    code = 4


def write_array(path, array, dtype: str | None = None) -> None:
    """Write ``array`` as a PCT1 file.

    ``dtype`` is ``"real64"`` or ``"complex128"``; when omitted it is taken
    from the array (anything complex is stored as complex128).
    """
    arr = np.asarray(array)
    if dtype is None:
        dtype = "complex128" if np.iscomplexobj(arr) else "real64"
    if dtype == "real64":
        if np.iscomplexobj(arr):
            raise ValueError("complex array cannot be written as real64")
        code = 0
    elif dtype == "complex128":
        code = 1
    else:
        raise UnknownDtypeError(f"unknown dtype {dtype!r}")
    if arr.ndim > 4:
        raise ValueError("at most 4 dimensions are supported")
    payload = np.ascontiguousarray(arr, dtype=_CODES[code])
    header = MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes(order="C"))


def read_array(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a PCT1 file")
    if len(raw) < 6:
        raise TruncatedPayloadError(f"{path}: header truncated")
    code, ndim = raw[4], raw[5]
    if code not in _CODES:
        raise UnknownDtypeError(f"{path}: unknown dtype code {code}")
    if ndim > 4:
        raise PCT1Error(f"{path}: ndim {ndim} exceeds 4")
    end = 6 + 8 * ndim
    if len(raw) < end:
        raise TruncatedPayloadError(f"{path}: header truncated")
    dims = struct.unpack(f"<{ndim}Q", raw[6:end])
    dt = _CODES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(raw) - end < nbytes:
        raise TruncatedPayloadError(f"{path}: expected {nbytes} payload bytes, found {len(raw) - end}")
    arr = np.frombuffer(raw, dtype=dt, count=nbytes // dt.itemsize, offset=end)
    return arr.reshape(dims).astype(dt.newbyteorder("="))


def emit_grayscale(path, slice2d) -> None:
    """Write a 2D real slice as an 8-bit binary PGM (P5)."""
    s = np.asarray(slice2d, dtype=float)
    if s.ndim != 2:
        raise ValueError("slice must be 2D")
    if np.isnan(s).any():
        raise ValueError("slice contains NaN")
    if not np.all(np.isfinite(s)):
        raise ValueError("slice contains inf")
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        pix = np.full(s.shape, 128, dtype=np.uint8)
    else:
        # round half up so 0.5 maps to 128
        pix = np.floor((s - lo) / (hi - lo) * 255 + 0.5).astype(np.uint8)
    h, w = s.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
