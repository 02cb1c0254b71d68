import math

import numpy as np
import pytest
from scipy.optimize import brentq

from pctomo.grids import GridSpec, ObjectVolume
from pctomo.simulate import (
    PhantomSpec,
    add_gaussian_noise,
    add_poisson_noise,
    ball_mask,
    cylinder_mask,
    equispaced_angles,
    expected_poisson_error,
    magnitude_norm,
    make_masks,
    phantom_ellipsoids,
    phantom_reference,
    poisson_err_estimate,
)

G = GridSpec.cube(24)


def test_ellipsoid_phantom_contract():
    v = phantom_ellipsoids(G, PhantomSpec(seed=7, target_magnitude=math.pi))
    assert np.all(v.data.imag == 0)
    assert magnitude_norm(v) == pytest.approx(math.pi, rel=1e-12)
    w = phantom_ellipsoids(G, PhantomSpec(seed=7, target_magnitude=math.pi))
    assert v.data.tobytes() == w.data.tobytes()
    u = phantom_ellipsoids(G, PhantomSpec(seed=8, target_magnitude=math.pi))
    assert not np.array_equal(u.data, v.data)


def test_absorbing_phantom():
    v = phantom_ellipsoids(G, PhantomSpec(seed=1, c_beta_delta=0.1))
    assert np.all(v.delta >= 0) and np.all(v.beta >= 0)
    assert v.beta.max() > 0
    # beta/delta ratio scatters around c because both are drawn independently
    inside = v.delta > 0
    ratio = np.median(v.beta[inside] / v.delta[inside])
    assert 0.05 < ratio < 0.2


@pytest.mark.parametrize("seed", range(8))
def test_support_strictly_inside(seed):
    v = phantom_ellipsoids(G, PhantomSpec(seed=seed)).data
    for ax in range(3):
        assert not np.any(np.take(v, [0, -1], axis=ax))


def test_region_cylinder_and_ball():
    cyl = phantom_ellipsoids(G, PhantomSpec(seed=2, region="cylinder"))
    assert not np.any(cyl.data[~cylinder_mask(G)])
    ball = phantom_ellipsoids(G, PhantomSpec(seed=2, region="ball", region_radius=0.8))
    assert not np.any(ball.data[~ball_mask(G, 0.8 * 11.5)])


def test_phantom_spec_validation():
    with pytest.raises(ValueError):
        PhantomSpec(n_ellipsoids=0)
    with pytest.raises(ValueError):
        PhantomSpec(sigma=-1)


def test_reference_shapes():
    mag = 2.0
    s = phantom_reference(G, "sphere", mag).data
    np.testing.assert_allclose(s, s[::-1, ::-1, ::-1], atol=1e-14)
    r = phantom_reference(G, "rectangle", mag).data
    assert set(np.unique(r.real)) == {0.0, mag / G.thickness}
    assert np.all(r.imag == 0)
    b = phantom_reference(G, "bullet", mag).data
    assert not np.allclose(b, b[:, ::-1, :])  # not point symmetric along x
    e = phantom_reference(G, "exp_ramp", mag).data.real
    row = e[12, :, 12]
    nz = row[row > 0]
    assert nz[-1] / nz[0] == pytest.approx(math.e, rel=1e-12)
    c2 = phantom_reference(GridSpec.toy2d(16), "circle", 1.0)
    assert magnitude_norm(c2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        phantom_reference(G, "triangle", 1.0)


def test_magnitude_norm_examples():
    assert magnitude_norm(ObjectVolume.zeros(G)) == 0
    g = GridSpec(1, 1, 1, k=2.0)
    v = ObjectVolume(g, np.full((1, 1, 1), 1 - 1j))
    assert magnitude_norm(v) == pytest.approx(2 * math.sqrt(2))
    assert magnitude_norm(ObjectVolume(g, (3 - 4j) * v.data)) == pytest.approx(5 * magnitude_norm(v))


def _intensity(n=(16, 80, 80), seed=0):
    return 1.0 + 0.3 * np.random.default_rng(seed).random(n)


def test_gaussian_noise():
    I = _intensity()
    assert I.size >= 1e5
    d = add_gaussian_noise(I, 0.03, seed=4)
    rel = np.linalg.norm(d.data - I) / np.linalg.norm(I)
    assert 0.9 * 0.03 <= rel <= 1.1 * 0.03
    assert d.err_norm == pytest.approx(np.linalg.norm(d.data - I), rel=1e-12)
    np.testing.assert_array_equal(add_gaussian_noise(I, 0.0, seed=4).data, I)
    np.testing.assert_array_equal(add_gaussian_noise(I, 0.03, seed=4).data, d.data)


def test_poisson_noise():
    I = _intensity()
    I[0, :4, :4] = 0.0
    counts, i0 = add_poisson_noise(I, 0.02, seed=5)
    c = counts.data
    assert np.all(c >= 0) and np.all(c == np.round(c))
    assert np.all(c[0, :4, :4] == 0)
    # independent root-finding oracle for the photon scale
    root = brentq(lambda t: expected_poisson_error(I, t) - 0.02, 1e-6, 1e12, xtol=1e-12, rtol=1e-14)
    assert i0 == pytest.approx(root, rel=1e-9)
    realized = np.linalg.norm(c - i0 * I) / (i0 * np.linalg.norm(I))
    assert abs(realized - 0.02) <= 0.1 * 0.02
    assert expected_poisson_error(I, 2 * i0) == pytest.approx(0.02 / math.sqrt(2), rel=1e-12)
    with pytest.raises(ValueError):
        add_poisson_noise(-I, 0.1)
    again, _ = add_poisson_noise(I, 0.02, seed=5)
    np.testing.assert_array_equal(again.data, c)


def test_poisson_err_estimate():
    I = _intensity((4, 60, 60))
    counts, i0 = add_poisson_noise(I, 0.05, seed=1)
    lam = i0 * I
    true_w = np.sqrt(np.sum((counts.data - lam) ** 2 / np.maximum(counts.data, 1.0)))
    est = poisson_err_estimate(counts.data, i_min=1.0)
    assert est == pytest.approx(true_w, rel=0.05)


def test_masks():
    ang = equispaced_angles(256)
    shape = (256, 4, 4)
    np.testing.assert_array_equal(make_masks(shape, ang), np.ones(shape))
    w = make_masks(shape, ang, keep=(0.0, np.deg2rad(160.0)))
    rows = w.reshape(256, -1).max(axis=1)
    assert rows.sum() == math.ceil(256 * 160 / 180) == 228
    np.testing.assert_array_equal(make_masks(shape, ang, beam_stop_radius=0.0), np.ones(shape))
    with pytest.raises(ValueError):
        make_masks(shape, ang, keep=(1.0, 1.0))
    bs = make_masks((1, 32, 32), [0.0], beam_stop_radius=np.pi / 30 * 4)
    assert bs[0, 0, 0] == 0 and bs[0, 16, 16] == 1
    xi = 2 * np.pi * np.fft.fftfreq(32)
    rad = np.hypot(xi[:, None], xi[None, :])
    np.testing.assert_array_equal(bs[0] == 0, rad < np.pi / 30 * 4)
