"""Unitary FFTs, symmetric zero padding and the discrete propagators.

All transforms act on the last two axes, so stacks of fields
``(..., ny, nx)`` are propagated in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

__all__ = [
    "PadSpec",
    "fft2",
    "ifft2",
    "zero_pad",
    "truncate",
    "fresnel_multiplier",
    "fresnel_propagate",
    "fresnel_backpropagate",
    "fraunhofer_propagate",
    "set_workers",
]

_WORKERS = 1


def set_workers(n: int) -> None:
    """Number of threads used by the FFT backend."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def fft2(field):
    return sfft.fft2(field, axes=(-2, -1), norm="ortho", workers=_WORKERS)


def ifft2(field):
    return sfft.ifft2(field, axes=(-2, -1), norm="ortho", workers=_WORKERS)


@dataclass(frozen=True)
class PadSpec:
    """Input dims ``(ny, nx)`` and padded dims ``(ny_pad, nx_pad)``."""

    shape: tuple[int, int]
    padded: tuple[int, int]

    def __post_init__(self):
        shape = tuple(int(v) for v in self.shape)
        padded = tuple(int(v) for v in self.padded)
        if len(shape) != 2 or len(padded) != 2:
            raise ValueError("PadSpec expects 2D shapes")
        if any(p < s for p, s in zip(padded, shape)):
            raise ValueError(f"padded dims {padded} smaller than input {shape}")
        if any(s < 0 for s in shape):
            raise ValueError("negative dims")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "padded", padded)

    @property
    def offsets(self) -> tuple[int, int]:
        return tuple(math.ceil((p - s) / 2) for p, s in zip(self.padded, self.shape))

    @property
    def window(self):
        oy, ox = self.offsets
        ny, nx = self.shape
        return (Ellipsis, slice(oy, oy + ny), slice(ox, ox + nx))

    @classmethod
    def identity(cls, shape) -> "PadSpec":
        return cls(tuple(shape), tuple(shape))

    @classmethod
    def by_factor(cls, shape, factor: int = 2) -> "PadSpec":
        # axes of length one (2D toy model) are never padded
        ny, nx = shape
        return cls((ny, nx), (ny if ny == 1 else factor * ny, factor * nx))


def zero_pad(field, pad: PadSpec):
    field = np.asarray(field)
    if field.shape[-2:] != pad.shape:
        raise ValueError(f"field dims {field.shape[-2:]} do not match {pad.shape}")
    out = np.zeros(field.shape[:-2] + pad.padded, dtype=np.result_type(field, np.complex128))
    out[pad.window] = field
    return out


def truncate(field, pad: PadSpec):
    field = np.asarray(field)
    if field.shape[-2:] != pad.padded:
        raise ValueError(f"field dims {field.shape[-2:]} do not match {pad.padded}")
    return field[pad.window].copy()


@lru_cache(maxsize=32)
def _multiplier(shape: tuple[int, int], nf: float) -> np.ndarray:
    fy = sfft.fftfreq(shape[0])
    fx = sfft.fftfreq(shape[1])
    xi2 = fy[:, None] ** 2 + fx[None, :] ** 2
    m = np.exp(-1j * np.pi * xi2 / nf)
    m.setflags(write=False)
    return m


def fresnel_multiplier(shape, nf: float) -> np.ndarray:
    """Kernel exp(-i*pi*|xi'|^2/nf) with xi' = j/n in FFT order."""
    if not nf > 0:
        raise ValueError("Fresnel number must be positive")
    if math.isinf(nf):
        return np.ones(tuple(shape), dtype=np.complex128)
    return _multiplier(tuple(int(s) for s in shape), float(nf))


def _check_nf(nf):
    if nf is None or not nf > 0:
        raise ValueError(f"Fresnel number must be positive, got {nf!r}")


def fresnel_propagate(field, nf: float, pad: PadSpec | None = None, keep_padded: bool = False):
    """Near-field propagation truncate(ifft2(m * fft2(pad(field))))."""
    _check_nf(nf)
    field = np.asarray(field)
    if pad is None:
        pad = PadSpec.identity(field.shape[-2:])
    if math.isinf(nf):
        out = zero_pad(field, pad)
        return out if keep_padded else field.astype(np.complex128, copy=True)
    out = ifft2(fresnel_multiplier(pad.padded, nf) * fft2(zero_pad(field, pad)))
    return out if keep_padded else truncate(out, pad)


def fresnel_backpropagate(field, nf: float):
    """Adjoint (= inverse) of the padded-domain Fresnel propagator."""
    _check_nf(nf)
    field = np.asarray(field, dtype=np.complex128)
    if math.isinf(nf):
        return field.copy()
    m = fresnel_multiplier(field.shape[-2:], nf)
    return ifft2(np.conj(m) * fft2(field))


def fraunhofer_propagate(field, pad: PadSpec | None = None, keep_padded: bool = False):
    """Far-field propagation truncate(fft2(pad(field)))."""
    field = np.asarray(field)
    if pad is None:
        pad = PadSpec.identity(field.shape[-2:])
    out = fft2(zero_pad(field, pad))
    return out if keep_padded else truncate(out, pad)
