import math

import numpy as np
import pytest

from vqrestore.degrade import (
    InfiniteIsnr,
    bsnr_db,
    convolve,
    degrade,
    delta_kernel,
    gaussian_kernel,
    isnr_db,
    pillbox_kernel,
)


def naive_correlate(img, taps):
    """Quadruple loop with hand-rolled mirror indexing."""
    h, w = img.shape
    hw = taps.shape[0] // 2

    def mirror(i, n):
        while i < 0 or i >= n:
            i = -i if i < 0 else 2 * (n - 1) - i
        return i

    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for dy in range(-hw, hw + 1):
                for dx in range(-hw, hw + 1):
                    acc += taps[dy + hw, dx + hw] * img[mirror(r + dy, h), mirror(c + dx, w)]
            out[r, c] = acc
    return out


def test_gaussian_normalized():
    k = gaussian_kernel(1.5)
    assert abs(k.taps.sum() - 1.0) < 1e-12
    assert k.half_width == math.ceil(3 * math.sqrt(1.5))


def test_gaussian_monotone_in_radius():
    t = gaussian_kernel(1.5).taps
    hw = t.shape[0] // 2
    centre = t[hw, hw]
    assert (t[np.arange(t.shape[0]) != hw] < centre).all()
    r2 = (np.arange(-hw, hw + 1)[:, None] ** 2 + np.arange(-hw, hw + 1)[None, :] ** 2).ravel()
    order = np.argsort(r2, kind="stable")
    vals, radii = t.ravel()[order], r2[order]
    assert all(b <= a for a, b, ra, rb in zip(vals, vals[1:], radii, radii[1:]) if rb > ra)


def test_gaussian_tap_ratio():
    t = gaussian_kernel(1.5).taps
    hw = t.shape[0] // 2
    assert t[hw, hw + 1] / t[hw, hw] == pytest.approx(math.exp(-1 / 3), rel=1e-12)
    assert math.exp(-1 / 3) == pytest.approx(0.716531, abs=1e-6)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_kernel_params_must_be_positive(bad):
    with pytest.raises(ValueError):
        gaussian_kernel(bad)
    with pytest.raises(ValueError):
        pillbox_kernel(bad)


def test_pillbox_subpixel():
    k = pillbox_kernel(0.4)
    assert k.half_width == 1
    np.testing.assert_array_equal(k.taps, [[0, 0, 0], [0, 1.0, 0], [0, 0, 0]])


def test_pillbox_unit_radius():
    t = pillbox_kernel(1.0).taps
    np.testing.assert_allclose(t, [[0, 0.2, 0], [0.2, 0.2, 0.2], [0, 0.2, 0]], rtol=0, atol=0)


@pytest.mark.parametrize("r", [0.7, 1.5, 2.2, 3.9])
def test_pillbox_symmetric(r):
    t = pillbox_kernel(r).taps
    np.testing.assert_array_equal(t, t.T)
    assert abs(t.sum() - 1) < 1e-12


def test_convolve_delta_identity():
    img = np.random.default_rng(0).uniform(0, 255, (7, 5))
    np.testing.assert_array_equal(convolve(img, delta_kernel()), img)


@pytest.mark.parametrize("kernel", [gaussian_kernel(2.0), pillbox_kernel(2.5)])
def test_convolve_preserves_constant(kernel):
    np.testing.assert_allclose(convolve(np.full((9, 11), 93.0), kernel), 93.0, rtol=1e-13)


def test_convolve_matches_naive_oracle():
    img = np.random.default_rng(1).uniform(0, 255, (8, 8))
    k = gaussian_kernel(1.5)
    np.testing.assert_allclose(convolve(img, k), naive_correlate(img, k.taps), rtol=0, atol=1e-10)


def test_convolve_kernel_wider_than_image():
    img = np.random.default_rng(2).uniform(0, 255, (3, 4))
    k = gaussian_kernel(5.0)
    np.testing.assert_allclose(convolve(img, k), naive_correlate(img, k.taps), rtol=0, atol=1e-10)


def _test_image(n=64, seed=0):
    rng = np.random.default_rng(seed)
    img = np.zeros((n, n))
    img[:, n // 2 :] = 200.0
    return img + rng.uniform(0, 20, (n, n))


def test_degrade_noise_variance_formula():
    img = _test_image()
    k = gaussian_kernel(1.5)
    pair = degrade(img, k, 20.0, seed=4)
    assert pair.noise_variance == pytest.approx(np.var(convolve(img, k)) / 100.0, rel=1e-12)
    np.testing.assert_array_equal(pair.blurred_noiseless, convolve(img, k))
    noise = pair.degraded - pair.blurred_noiseless
    assert pair.realized_bsnr_db == pytest.approx(bsnr_db(pair.blurred_noiseless, np.var(noise)))


def test_degrade_deterministic_per_seed():
    img = _test_image()
    a = degrade(img, gaussian_kernel(1.5), 10.0, seed=11)
    b = degrade(img, gaussian_kernel(1.5), 10.0, seed=11)
    c = degrade(img, gaussian_kernel(1.5), 10.0, seed=12)
    assert a.degraded.tobytes() == b.degraded.tobytes()
    assert not np.array_equal(a.degraded, c.degraded)


def test_degrade_realized_bsnr_close_at_256():
    img = _test_image(256)
    pair = degrade(img, gaussian_kernel(1.5), 20.0, seed=0)
    assert 19.7 <= pair.realized_bsnr_db <= 20.3


def test_degrade_rejects_constant():
    with pytest.raises(ValueError):
        degrade(np.full((8, 8), 5.0), gaussian_kernel(1.0), 20.0)


def test_bsnr_identities():
    img = _test_image()
    v = float(np.var(img))
    assert bsnr_db(img, v) == pytest.approx(0.0, abs=1e-12)
    assert bsnr_db(img, v / 100) == pytest.approx(20.0, abs=1e-12)
    assert bsnr_db(img, v) - bsnr_db(img, 2 * v) == pytest.approx(10 * math.log10(2), abs=1e-12)
    assert 10 * math.log10(2) == pytest.approx(3.0103, abs=1e-4)
    with pytest.raises(ValueError):
        bsnr_db(img, 0.0)
    with pytest.raises(ValueError):
        bsnr_db(np.ones((3, 3)), 1.0)


def test_isnr():
    rng = np.random.default_rng(3)
    f = rng.uniform(0, 255, (16, 16))
    g = f + rng.normal(0, 10, f.shape)
    assert isnr_db(f, g, g) == 0.0
    half = f + (g - f) / 2
    assert isnr_db(f, g, half) == pytest.approx(10 * math.log10(4), abs=1e-12)
    assert 10 * math.log10(4) == pytest.approx(6.0206, abs=1e-4)
    assert isnr_db(f, g, f + 2 * (g - f)) < 0


def test_isnr_errors():
    f = np.zeros((4, 4))
    with pytest.raises(ValueError):
        isnr_db(f, np.ones((4, 4)), np.ones((4, 5)))
    with pytest.raises(InfiniteIsnr):
        isnr_db(f, np.ones((4, 4)), f)
