"""Near-field and far-field forward operators with derivative and adjoint.

Per incident angle the object enters through its projection ``p = R_c N``
and the transmission ``O = exp(-i k p)``.  With ``O_0 = O - 1`` the
intensities are

    nearfield:  I = |1 + D(pad(O_0))|^2     (D the Fresnel propagator)
    farfield:   I = |F(pad(O_0))|^2         (F the unitary 2D FFT)

optionally cut to a smaller detector window and multiplied by an intensity
scale ``I_0``.  Writing ``psi`` for the detected field, the derivative in
direction ``h`` is ``2 Re(conj(psi) * D(pad(-i k O R_c h)))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import transforms as tr
from .grids import GridSpec, IntensityData, ObjectVolume
from .radon import IdentityProjector, SparseProjector, build_projector

__all__ = [
    "ForwardModel",
    "LinearizationPoint",
    "make_model",
    "otf0",
    "intensity",
    "forward",
    "linearize",
    "derivative_apply",
    "derivative_adjoint_apply",
    "ctf_forward",
    "ctf_phase",
]


@dataclass(frozen=True, eq=False)
class ForwardModel:
    """Forward operator configuration.

    ``pad`` maps projection dims to the computational grid, ``det`` maps the
    detector window to the computational grid (identity unless holograms
    are truncated).
    """

    mode: str
    projector: SparseProjector | IdentityProjector
    pad: tr.PadSpec
    det: tr.PadSpec
    nf: float | None = None
    k: float = 1.0
    intensity_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("nearfield", "farfield"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "nearfield" and (self.nf is None or not self.nf > 0):
            raise ValueError("nearfield mode needs a positive Fresnel number")
        if self.mode == "farfield" and self.det.shape != self.det.padded:
            # the far-field pattern lives in FFT order, a centred window is meaningless
            raise ValueError("farfield data cannot be truncated")
        n_a, my, n_det = self.projector.sino_shape
        if self.pad.shape != (my, n_det):
            raise ValueError("pad spec does not match projection dims")
        if self.det.padded != self.pad.padded:
            raise ValueError("detector window must live on the computational grid")

    @property
    def angles(self):
        return self.projector.angles

    @property
    def vol_shape(self):
        return self.projector.vol_shape

    @property
    def data_shape(self):
        return (self.projector.n_angles,) + self.det.shape

    @property
    def probe(self) -> float:
        return 1.0 if self.mode == "nearfield" else 0.0

    # propagation on the computational grid and its adjoint
    def _prop(self, u):
        if self.mode == "farfield":
            return tr.fft2(u)
        if math.isinf(self.nf):
            return u
        return tr.ifft2(tr.fresnel_multiplier(u.shape[-2:], self.nf) * tr.fft2(u))

    def _prop_adj(self, u):
        if self.mode == "farfield":
            return tr.ifft2(u)
        return tr.fresnel_backpropagate(u, self.nf)

    def linearize(self, vol) -> "LinearizationPoint":
        return linearize(self, vol)


def make_model(
    grid: GridSpec,
    angles,
    mode: str = "nearfield",
    nf: float | None = None,
    pad_factor: int = 2,
    n_det: int | None = None,
    truncate: bool | int = False,
    intensity_scale: float = 1.0,
    per_angle: bool = False,
    subdiv: int = 2,
) -> ForwardModel:
    """Convenience constructor.

    ``per_angle=True`` replaces the Radon transform by the identity so the
    unknowns are the projections themselves (angle-wise phase retrieval).
    ``truncate=True`` keeps a detector of projection size; an integer ``f``
    keeps ``f`` times the projection size (capped at the padded grid).
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    n_det = grid.mx if n_det is None else int(n_det)
    if per_angle:
        proj = IdentityProjector(angles, grid.my, n_det)
    else:
        proj = build_projector(grid, angles, n_det, subdiv)
    pad = tr.PadSpec.by_factor((grid.my, n_det), pad_factor)
    if truncate is False:
        det_shape = pad.padded
    else:
        f = 1 if truncate is True else int(truncate)
        det_shape = tuple(min(f * n, p) for n, p in zip(pad.shape, pad.padded))
    det = tr.PadSpec(det_shape, pad.padded)
    return ForwardModel(mode, proj, pad, det, nf, grid.k, intensity_scale)


def otf0(proj, k: float = 1.0):
    """Normalized transmission exp(-i k proj) - 1."""
    return np.expm1(-1j * k * np.asarray(proj))


def _as_array(vol):
    return vol.data if isinstance(vol, ObjectVolume) else np.asarray(vol, dtype=np.complex128)


@dataclass(eq=False)
class LinearizationPoint:
    """Cached quantities of the forward map at a fixed volume."""

    model: ForwardModel
    vol: np.ndarray
    proj: np.ndarray
    otf: np.ndarray
    psi: np.ndarray

    @property
    def intensity(self) -> np.ndarray:
        return self.model.intensity_scale * (self.psi.real**2 + self.psi.imag**2)

    def apply(self, h) -> np.ndarray:
        m = self.model
        v = (-1j * m.k) * self.otf * m.projector.apply(_as_array(h))
        w = tr.truncate(m._prop(tr.zero_pad(v, m.pad)), m.det)
        return 2.0 * m.intensity_scale * np.real(np.conj(self.psi) * w)

    def adjoint(self, g) -> np.ndarray:
        m = self.model
        g = np.asarray(g, dtype=float)
        if g.shape != m.data_shape:
            raise ValueError(f"data shape {g.shape} does not match {m.data_shape}")
        u = (2.0 * m.intensity_scale) * self.psi * g
        w = tr.truncate(m._prop_adj(tr.zero_pad(u, m.det)), m.pad)
        return m.projector.adjoint((1j * m.k) * np.conj(self.otf) * w)


def linearize(model: ForwardModel, vol) -> LinearizationPoint:
    arr = _as_array(vol)
    if arr.shape != model.vol_shape:
        raise ValueError(f"volume shape {arr.shape} does not match {model.vol_shape}")
    proj = model.projector.apply(arr)
    otf = np.exp(-1j * model.k * proj)
    field = model._prop(tr.zero_pad(otf - 1.0, model.pad))
    if model.probe:
        field += model.probe
    psi = tr.truncate(field, model.det)
    return LinearizationPoint(model, arr, proj, otf, psi)


def intensity(model: ForwardModel, vol) -> np.ndarray:
    """Forward map as a bare array of shape ``model.data_shape``."""
    return linearize(model, vol).intensity


def forward(model: ForwardModel, vol) -> IntensityData:
    return IntensityData(model.angles, intensity(model, vol))


def derivative_apply(model: ForwardModel, lin: LinearizationPoint, h) -> np.ndarray:
    if lin.model is not model:
        raise ValueError("linearization point belongs to a different model")
    return lin.apply(h)


def derivative_adjoint_apply(model: ForwardModel, lin: LinearizationPoint, g) -> np.ndarray:
    if lin.model is not model:
        raise ValueError("linearization point belongs to a different model")
    return lin.adjoint(g)


def ctf_phase(shape, nf: float) -> np.ndarray:
    """Chirp phase pi*|xi'|^2/nf on an FFT-ordered grid."""
    fy = np.fft.fftfreq(shape[0])
    fx = np.fft.fftfreq(shape[1])
    return np.pi * (fy[:, None] ** 2 + fx[None, :] ** 2) / nf


def ctf_forward(model: ForwardModel, vol) -> np.ndarray:
    """Weak-object intensities from the contrast transfer function."""
    if model.mode != "nearfield":
        raise ValueError("the CTF model only applies in the near field")
    p = model.projector.apply(_as_array(vol))
    p_delta = tr.zero_pad(p.real, model.pad)
    p_beta = tr.zero_pad(-p.imag, model.pad)
    phi = ctf_phase(model.pad.padded, model.nf)
    spec = -2.0 * model.k * (np.sin(phi) * tr.fft2(p_delta) + np.cos(phi) * tr.fft2(p_beta))
    out = 1.0 + np.real(tr.ifft2(spec))
    return model.intensity_scale * tr.truncate(out, model.det)
