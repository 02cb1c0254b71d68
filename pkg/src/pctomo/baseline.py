"""Direct CTF phase retrieval and filtered backprojection.

These serve as the two-step comparison method: retrieve every projection
independently from its hologram, then invert the Radon transform.
"""

from __future__ import annotations

import numpy as np

from . import transforms as tr
from .forward import ctf_phase
from .grids import ObjectVolume

__all__ = ["ctf_transfer", "ctf_invert", "fbp", "ramp_filter"]


def ctf_transfer(shape, nf: float, c: complex = 1.0) -> np.ndarray:
    """Transfer T(xi) for a single-material object N = c * r.

    With c = a - i b (delta = a r, beta = b r) the weak-object relation is
    F(I - 1) = -2k T F(R r), T = a sin(phi) + b cos(phi).
    """
    c = complex(c)
    phi = ctf_phase(shape, nf)
    return c.real * np.sin(phi) - c.imag * np.cos(phi)


def ctf_invert(
    data,
    nf: float,
    k: float = 1.0,
    c: complex = 1.0,
    cutoff: float = 1e-2,
    pad: tr.PadSpec | None = None,
    det: tr.PadSpec | None = None,
) -> np.ndarray:
    """Per-angle CTF inversion with a Tikhonov-clamped division.

    ``data`` has shape (n_angles, ky, kx).  ``det`` embeds the detector
    window into the computational grid (holograms smaller than the grid are
    completed with I = 1), ``pad`` cuts the projection window back out.
    Returns projections of the real variable ``r`` where N = c * r.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    I = np.asarray(getattr(data, "data", data), dtype=float)
    if det is None:
        det = tr.PadSpec.identity(I.shape[-2:])
    u = tr.zero_pad(I - 1.0, det)
    T = ctf_transfer(det.padded, nf, c)
    spec = T * tr.fft2(u) / (-2.0 * k * (T * T + cutoff * cutoff))
    p = np.real(tr.ifft2(spec))
    if pad is not None:
        p = tr.truncate(p, pad)
    return p


def ramp_filter(n: int, dx: float = 1.0) -> np.ndarray:
    """Hann-windowed |nu| on an FFT grid of length n (nu in cycles per length)."""
    nu = np.fft.fftfreq(n, d=dx)
    nu_max = 0.5 / dx
    return np.abs(nu) * 0.5 * (1.0 + np.cos(np.pi * nu / nu_max))


def fbp(projections, projector) -> ObjectVolume:
    """Filtered backprojection for angles equispaced in [0, pi)."""
    p = np.asarray(projections)
    n_a = projector.n_angles
    if p.shape != projector.sino_shape:
        raise ValueError(f"sinogram shape {p.shape} does not match {projector.sino_shape}")
    expected = np.arange(n_a) * (np.pi / n_a)
    if not np.allclose(projector.angles, expected, atol=1e-9):
        raise ValueError("filtered backprojection needs angles equispaced in [0, pi)")
    dx = projector.grid.dx
    n_det = p.shape[-1]
    nfft = int(2 ** np.ceil(np.log2(2 * n_det)))
    filt = ramp_filter(nfft, dx)
    q = np.fft.ifft(np.fft.fft(p, n=nfft, axis=-1) * filt, axis=-1)[..., :n_det]
    if np.isrealobj(p):
        q = q.real
    vol = projector.adjoint(q) * (np.pi / n_a) / dx
    return ObjectVolume(projector.grid, vol)
