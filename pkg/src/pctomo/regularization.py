"""Object and data Gramians, and linear constraint embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .grids import inner_product

__all__ = [
    "ObjectGramian",
    "DataGramian",
    "Constraint",
    "gramian_x_inv",
    "gramian_y",
    "constraint_embed",
    "constraint_adjoint",
    "sobolev_multiplier",
]


def sobolev_multiplier(shape, s: float, axes=None) -> np.ndarray:
    """(1 + |xi_dis|^2)^s with xi_dis = 2*pi*j/n per axis, FFT order.

    Axes not listed in ``axes`` contribute zero frequency.
    """
    xi2 = np.zeros(shape)
    for ax, n in enumerate(shape):
        if axes is not None and ax not in axes and ax - len(shape) not in axes:
            continue
        f = 2 * np.pi * np.fft.fftfreq(n)
        sl = [None] * len(shape)
        sl[ax] = slice(None)
        xi2 = xi2 + (f**2)[tuple(sl)]
    return (1.0 + xi2) ** s


@dataclass(eq=False)
class ObjectGramian:
    """Gramian of the object space.

    ``kind`` is ``"identity"`` or ``"sobolev"``.  ``beta_weight`` scales the
    squared norm of the absorption part, so ``||N||^2 = ||delta||^2 +
    beta_weight * ||beta||^2`` (before the Sobolev smoothing).
    """

    kind: str = "identity"
    s: float = 0.0
    beta_weight: float = 1.0
    axes: Optional[tuple] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("identity", "sobolev"):
            raise ValueError(f"unknown Gramian kind {self.kind!r}")
        if self.s < 0:
            raise ValueError("Sobolev order must be nonnegative")
        if not self.beta_weight > 0:
            raise ValueError("beta_weight must be positive")
        if self.kind == "sobolev" and self.s == 0:
            self.kind = "identity"

    @classmethod
    def l2(cls) -> "ObjectGramian":
        return cls("identity")

    @classmethod
    def sobolev(cls, s: float, beta_weight: float = 1.0, axes=None) -> "ObjectGramian":
        return cls("sobolev", float(s), beta_weight, axes)

    @staticmethod
    def weights_for_ratio(c_beta_delta: float) -> float:
        """beta_weight making a deviation c in beta cost as much as 1 in delta."""
        return 1.0 / c_beta_delta**2

    def _mult(self, shape, power):
        key = (shape, power)
        if key not in self._cache:
            self._cache[key] = sobolev_multiplier(shape, power * self.s, self.axes)
        return self._cache[key]

    def _smooth(self, v, power):
        if self.kind == "identity":
            return np.array(v, copy=True)
        m = self._mult(v.shape, power)
        out = sfft.ifftn(m * sfft.fftn(v, norm="ortho"), norm="ortho")
        return out.real if np.isrealobj(v) else out

    def _weight_beta(self, v, w):
        if w == 1.0 or np.isrealobj(v):
            return v
        return v.real + 1j * w * v.imag

    def apply(self, v):
        v = np.asarray(v)
        return self._weight_beta(self._smooth(v, +1), self.beta_weight)

    def apply_inv(self, v):
        v = np.asarray(v)
        return self._weight_beta(self._smooth(v, -1), 1.0 / self.beta_weight)

    def inner(self, a, b) -> float:
        return inner_product(a, self.apply(b))

    def norm(self, a) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))


def gramian_x_inv(gram: ObjectGramian, volume):
    return gram.apply_inv(volume)


@dataclass(eq=False)
class DataGramian:
    """Diagonal data-space Gramian.

    ``kind="poisson"`` weights each entry by ``1 / max(I_err, i_min)``; a
    binary ``mask`` removes entries (beam stop, missing wedge).
    """

    kind: str = "identity"
    i_err: Optional[np.ndarray] = None
    i_min: Optional[float] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("identity", "poisson"):
            raise ValueError(f"unknown data Gramian {self.kind!r}")
        if self.kind == "poisson":
            if self.i_err is None:
                raise ValueError("poisson Gramian needs the measured data")
            if self.i_min is None or not self.i_min > 0:
                raise ValueError("i_min must be positive")
        w = None
        if self.kind == "poisson":
            w = 1.0 / np.maximum(np.asarray(self.i_err, dtype=float), self.i_min)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=float)
            if not np.all((m == 0) | (m == 1)):
                raise ValueError("mask weights must be binary")
            w = m if w is None else w * m
        self.weights = w

    def apply(self, data):
        data = np.asarray(data, dtype=float)
        if self.weights is None:
            return data.copy()
        if self.weights.shape != data.shape:
            raise ValueError("data shape does not match Gramian")
        return self.weights * data

    def inner(self, a, b) -> float:
        return inner_product(a, self.apply(b))

    def norm(self, a) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))


def gramian_y(gram: DataGramian, data):
    return gram.apply(data)


@dataclass(eq=False)
class Constraint:
    """Linear constraint N = c * r restricted to a support mask.

    ``c=None`` leaves the variable complex (no material constraint);
    ``mask=None`` means no support constraint.
    """

    c: Optional[complex] = None
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.c is not None:
            self.c = complex(self.c)
            if self.c == 0:
                raise ValueError("material constant must be nonzero")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def pure_phase(cls, mask=None):
        return cls(1.0, mask)

    @classmethod
    def single_material(cls, c_beta_delta: float, mask=None):
        """N = delta - i*beta with beta = c_beta_delta * delta."""
        return cls(1.0 - 1j * c_beta_delta, mask)

    @classmethod
    def support(cls, mask):
        return cls(None, mask)

    @property
    def is_real(self) -> bool:
        return self.c is not None

    def _masked(self, v):
        if self.mask is None:
            return v
        if self.mask.shape != v.shape:
            raise ValueError("mask shape does not match volume")
        return np.where(self.mask, v, 0)

    def embed(self, r):
        r = np.asarray(r)
        if self.c is None:
            return self._masked(r.astype(np.complex128))
        return self._masked(self.c * np.asarray(r, dtype=float))

    def adjoint(self, v):
        v = np.asarray(v, dtype=np.complex128)
        if self.c is None:
            return self._masked(v)
        return self._masked(np.real(np.conj(self.c) * v))

    def reduce(self, v):
        """Least-squares reduced variable of a volume (left inverse of embed)."""
        scale = 1.0 if self.c is None else abs(self.c) ** 2
        return self.adjoint(v) / scale

    def project(self, v):
        """Orthogonal projection onto the constrained subspace."""
        return self.embed(self.reduce(v))

    def zeros(self, shape):
        return np.zeros(shape, dtype=float if self.c is not None else np.complex128)


def constraint_embed(constr: Constraint, reduced):
    return constr.embed(reduced)


def constraint_adjoint(constr: Constraint, volume):
    return constr.adjoint(volume)
