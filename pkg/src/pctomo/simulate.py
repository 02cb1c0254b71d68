"""Phantoms, noise models and data masks for synthetic experiments.

Ellipsoid geometry is an artifact convention: centres uniform in the central
70% of the grid, semi-axes uniform in [5%, 25%] of the grid extent, uniformly
random orientation, later ellipsoids overwriting earlier ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .grids import GridSpec, IntensityData, ObjectVolume

__all__ = [
    "PhantomSpec",
    "phantom_ellipsoids",
    "phantom_reference",
    "magnitude_norm",
    "rescale",
    "add_gaussian_noise",
    "add_poisson_noise",
    "poisson_err_estimate",
    "make_masks",
    "equispaced_angles",
    "cylinder_mask",
    "ball_mask",
]


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    n_ellipsoids: int = 10
    mu: float = 1.0
    sigma: float = 0.3
    c_beta_delta: float = 0.0
    target_magnitude: float = math.pi
    # where ellipsoids may live: "cube", "cylinder" (inscribed in the x-z
    # square) or "ball" (sphere of radius ``region_radius`` * half-extent)
    region: str = "cube"
    region_radius: float = 1.0

    def __post_init__(self):
        if self.n_ellipsoids < 1:
            raise ValueError("need at least one ellipsoid")
        if self.sigma < 0 or self.c_beta_delta < 0:
            raise ValueError("sigma and c_beta_delta must be nonnegative")
        if self.region not in ("cube", "cylinder", "ball"):
            raise ValueError(f"unknown region {self.region!r}")


def _coords(grid: GridSpec):
    """Centred voxel coordinates in units of voxels, broadcastable to (my, mx, mz)."""
    y = np.arange(grid.my) - (grid.my - 1) / 2
    x = np.arange(grid.mx) - (grid.mx - 1) / 2
    z = np.arange(grid.mz) - (grid.mz - 1) / 2
    return y[:, None, None], x[None, :, None], z[None, None, :]


def _fit_radius(center, half, region, region_radius):
    """Largest radius of a ball at ``center`` that stays inside the region."""
    # keep one voxel of margin to the boundary
    slack = [h - abs(c) - 1.0 if h > 0 else np.inf for c, h in zip(center, half)]
    r = min(slack)
    if region == "cylinder":
        R = min(half[1], half[2]) * region_radius
        r = min(r, R - math.hypot(center[1], center[2]) - 1.0)
    elif region == "ball":
        R = min(h for h in half if h > 0) * region_radius
        r = min(r, R - math.sqrt(sum(c * c for c in center)) - 1.0)
    return r


def phantom_ellipsoids(grid: GridSpec, spec: PhantomSpec) -> ObjectVolume:
    """Random nested ellipsoids scaled to ``spec.target_magnitude``."""
    half = np.array([(grid.my - 1) / 2, (grid.mx - 1) / 2, (grid.mz - 1) / 2])
    ext = np.array([grid.my, grid.mx, grid.mz], dtype=float)
    active = ext > 1
    Y, X, Z = _coords(grid)
    out = np.zeros(grid.shape, dtype=np.complex128)
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_ellipsoids)
    for child in children:
        rng = np.random.default_rng(child)
        frac = rng.uniform(-0.35, 0.35, size=3)
        center = np.where(active, frac * ext, 0.0)
        axes = rng.uniform(0.05, 0.25, size=3) * ext
        rot = Rotation.random(random_state=rng).as_matrix()
        d = max(rng.normal(spec.mu, spec.sigma * spec.mu), 0.0)
        b = spec.c_beta_delta * max(rng.normal(spec.mu, spec.sigma * spec.mu), 0.0)
        phi = rng.uniform(0.0, 2 * np.pi)
        if grid.my == 1:
            # ellipses in the rotation plane only
            c, s = math.cos(phi), math.sin(phi)
            rot = np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])
            axes[0] = 1.0
        rmax = _fit_radius(center, half, spec.region, spec.region_radius)
        amax = axes[active].max()
        if rmax < 1.0:
            continue
        if amax > rmax:
            axes = np.where(active, axes * rmax / amax, axes)
        # local coordinates u = R^T (p - c)
        p = (Y - center[0], X - center[1], Z - center[2])
        q = 0.0
        for i in range(3):
            if not active[i]:
                continue
            u = rot[0, i] * p[0] + rot[1, i] * p[1] + rot[2, i] * p[2]
            q = q + (u / axes[i]) ** 2
        inside = q <= 1.0
        out = np.where(inside, d - 1j * b, out)
    vol = ObjectVolume(grid, out)
    if not np.any(out):
        raise ValueError("phantom came out empty; try another seed")
    return rescale(vol, spec.target_magnitude)


def magnitude_norm(volume: ObjectVolume) -> float:
    """k * L * max|N|."""
    g = volume.grid
    if volume.data.size == 0:
        return 0.0
    return g.k * g.thickness * float(np.max(np.abs(volume.data)))


def rescale(volume: ObjectVolume, target: float) -> ObjectVolume:
    cur = magnitude_norm(volume)
    if cur == 0:
        raise ValueError("cannot rescale a zero volume")
    return ObjectVolume(volume.grid, volume.data * (target / cur))


def phantom_reference(grid: GridSpec, shape: str, magnitude: float, size: float = 0.6) -> ObjectVolume:
    """Pure-phase reference objects.

    ``size`` is the support width as a fraction of the grid extent.  The
    bullet is a box capped by a half-disc on the +x side; ``exp_ramp``
    grows as exp(t) for t in [0, 1] across its box along x.
    """
    Y, X, Z = _coords(grid)
    hx, hz = size * grid.mx / 2, size * grid.mz / 2
    hy = size * grid.my / 2 if grid.my > 1 else np.inf
    box = (np.abs(X) <= hx) & (np.abs(Z) <= hz) & (np.abs(Y) <= hy)
    if shape == "rectangle":
        f = box.astype(float)
    elif shape in ("sphere", "circle"):
        r = size * min(grid.mx, grid.mz) / 2
        yy = Y if grid.my > 1 else 0 * Y
        f = ((X**2 + yy**2 + Z**2) <= r * r).astype(float)
    elif shape == "bullet":
        body = (X >= -hx) & (X <= 0) & (np.abs(Z) <= hz) & (np.abs(Y) <= hy)
        yy = Y if grid.my > 1 else 0 * Y
        cap = (X > 0) & ((X / hx) ** 2 + (Z / hz) ** 2 + (yy / hy if np.isfinite(hy) else 0) ** 2 <= 1.0)
        f = (body | cap).astype(float)
    elif shape in ("exp_ramp", "exp-ramp"):
        xs = X[0, :, 0]
        inx = xs[np.abs(xs) <= hx]
        x0, x1 = inx.min(), inx.max()
        t = (X - x0) / (x1 - x0)
        f = np.where(box, np.exp(np.clip(t, 0, 1)), 0.0)
    else:
        raise ValueError(f"unknown reference shape {shape!r}")
    f = np.broadcast_to(f, grid.shape).astype(float)
    if not f.any():
        raise ValueError("reference shape does not fit the grid")
    f = f / f.max() * (magnitude / (grid.k * grid.thickness))
    return ObjectVolume(grid, f.astype(np.complex128))


def _as_data(data):
    if isinstance(data, IntensityData):
        return data
    arr = np.asarray(data, dtype=float)
    n = arr.shape[0]
    return IntensityData(np.arange(n) * (np.pi / max(n, 1)), arr)


def add_gaussian_noise(data, epsilon: float, seed: int = 0) -> IntensityData:
    """Additive white noise with sigma = epsilon * ||I|| / sqrt(n)."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    d = _as_data(data)
    I = d.data
    sigma = epsilon * np.linalg.norm(I) / math.sqrt(I.size)
    err = np.random.default_rng(seed).normal(0.0, 1.0, size=I.shape) * sigma
    return IntensityData(d.angles, I + err, d.weights, float(np.linalg.norm(err)))


def add_poisson_noise(data, epsilon: float | None = None, seed: int = 0, i0: float | None = None):
    """Poisson counts with mean ``I0 * I``.

    ``I0`` is either given or chosen so the expected relative L2 error
    sqrt(sum(I0 I)) / (I0 ||I||) equals ``epsilon``.  This relation can be
    solved for I0 in closed form: I0 = sum(I) / (epsilon^2 ||I||^2).
    Returns ``(counts, I0)``; ``counts.err_norm`` is the realized
    ``||counts - I0 I||``.
    """
    d = _as_data(data)
    I = d.data
    if np.any(I < 0):
        raise ValueError("Poisson noise needs nonnegative intensities")
    if i0 is None:
        if epsilon is None or not epsilon > 0:
            raise ValueError("give either epsilon > 0 or i0")
        i0 = float(I.sum() / (epsilon**2 * np.sum(I * I)))
    lam = i0 * I
    counts = np.random.default_rng(seed).poisson(lam).astype(float)
    err = float(np.linalg.norm(counts - lam))
    return IntensityData(d.angles, counts, d.weights, err), i0


def expected_poisson_error(I, i0) -> float:
    I = np.asarray(I, dtype=float)
    return math.sqrt(i0 * I.sum()) / (i0 * np.linalg.norm(I))


def poisson_err_estimate(counts, weights=None, i_min: float = 1.0) -> float:
    """Noise level in the Poisson-weighted data metric, estimated from counts.

    Uses Var(count) = E(count), so E[w (c - lam)^2 / max(c, i_min)] is
    approximated by w * c / max(c, i_min).
    """
    c = np.asarray(counts, dtype=float)
    w = np.ones_like(c) if weights is None else np.asarray(weights, dtype=float)
    return math.sqrt(float(np.sum(w * c / np.maximum(c, i_min))))


def equispaced_angles(n: int, range_deg: float = 180.0) -> np.ndarray:
    return np.arange(n) * (np.deg2rad(range_deg) / n)


def make_masks(
    shape,
    angles,
    keep=None,
    beam_stop_radius: float | None = None,
    dx: float = 1.0,
) -> np.ndarray:
    """Binary weights for a data array of shape (n_angles, ky, kx).

    ``keep = (lo, hi)`` in radians keeps angles with lo <= theta < hi.
    ``beam_stop_radius`` masks far-field pixels with |xi_dis| below it,
    with xi_dis = 2*pi*j/(n*dx) in FFT order.
    """
    n_a, ky, kx = shape
    angles = np.asarray(angles, dtype=float)
    if angles.size != n_a:
        raise ValueError("angle count does not match data")
    w = np.ones(shape)
    if keep is not None:
        lo, hi = keep
        if not hi > lo:
            raise ValueError("empty kept angle range")
        rows = (angles >= lo - 1e-12) & (angles < hi - 1e-12)
        if not rows.any():
            raise ValueError("no angle lies in the kept range")
        w[~rows] = 0.0
    if beam_stop_radius:
        fy = 2 * np.pi * np.fft.fftfreq(ky, d=dx)
        fx = 2 * np.pi * np.fft.fftfreq(kx, d=dx)
        rad = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
        w[:, rad < beam_stop_radius] = 0.0
    return w


def cylinder_mask(grid: GridSpec, radius_frac: float = 1.0) -> np.ndarray:
    Y, X, Z = _coords(grid)
    R = radius_frac * min(grid.mx, grid.mz) / 2
    return np.broadcast_to((X**2 + Z**2) <= R * R, grid.shape).copy()


def ball_mask(grid: GridSpec, radius: float) -> np.ndarray:
    """Voxels within ``radius`` (in voxels) of the grid centre."""
    Y, X, Z = _coords(grid)
    yy = Y if grid.my > 1 else 0 * Y
    return np.broadcast_to((X**2 + yy**2 + Z**2) <= radius * radius, grid.shape).copy()
