import numpy as np
import pytest

from vqrestore.cls import ClsConfig, SingularFilter, cls_restore, default_alpha, laplacian_3x3
from vqrestore.degrade import delta_kernel, gaussian_kernel, pillbox_kernel


def circulant(stencil, h, w):
    """Dense matrix of periodic correlation with a centre-anchored stencil."""
    kh, kw = stencil.shape
    m = np.zeros((h * w, h * w))
    for r in range(h):
        for c in range(w):
            for i in range(kh):
                for j in range(kw):
                    rr, cc = (r + i - kh // 2) % h, (c + j - kw // 2) % w
                    m[r * w + c, rr * w + cc] += stencil[i, j]
    return m


def test_laplacian_stencil():
    lap = laplacian_3x3()
    assert lap.sum() == 0
    np.testing.assert_array_equal(lap, [[0, -1, 0], [-1, 4, -1], [0, -1, 0]])
    img = np.full((5, 5), 9.0)
    np.testing.assert_array_equal(circulant(lap, 5, 5) @ img.ravel(), 0.0)
    impulse = np.zeros((5, 5))
    impulse[2, 2] = 1.0
    resp = (circulant(lap, 5, 5) @ impulse.ravel()).reshape(5, 5)
    np.testing.assert_array_equal(resp[1:4, 1:4], lap)


def test_default_alpha():
    assert default_alpha(20) == 0.05
    assert default_alpha(10) == 0.1
    assert default_alpha(40) == 0.025
    for bad in (0, -3):
        with pytest.raises(ValueError):
            default_alpha(bad)


def test_alpha_must_be_nonnegative():
    with pytest.raises(ValueError):
        ClsConfig(-0.1, delta_kernel())


def test_delta_kernel_alpha_zero_is_identity():
    g = np.random.default_rng(0).uniform(0, 255, (13, 10))
    np.testing.assert_allclose(cls_restore(g, ClsConfig(0.0, delta_kernel())), g, rtol=0, atol=1e-8)


@pytest.mark.parametrize(
    "kernel, alpha, shape",
    [
        (gaussian_kernel(1.5), 0.05, (8, 8)),
        (gaussian_kernel(0.8), 0.1, (7, 6)),
        (pillbox_kernel(1.5), 0.05, (8, 5)),
        (gaussian_kernel(0.2), 0.0, (8, 8)),
    ],
)
def test_matches_dense_circulant_solve(kernel, alpha, shape):
    h, w = shape
    g = np.random.default_rng(1).uniform(0, 255, shape)
    H = circulant(kernel.taps, h, w)
    C = circulant(laplacian_3x3(), h, w)
    want = np.linalg.solve(H.T @ H + alpha * C.T @ C, H.T @ g.ravel()).reshape(shape)
    got = cls_restore(g, ClsConfig(alpha, kernel))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-6)


def test_linear():
    rng = np.random.default_rng(2)
    g1, g2 = rng.uniform(0, 255, (2, 16, 12))
    cfg = ClsConfig(0.05, gaussian_kernel(1.5))
    lhs = cls_restore(2.5 * g1 - 0.75 * g2, cfg)
    rhs = 2.5 * cls_restore(g1, cfg) - 0.75 * cls_restore(g2, cfg)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-8)


def test_laplacian_energy_falls_with_alpha():
    g = np.random.default_rng(3).uniform(0, 255, (24, 24))
    C = circulant(laplacian_3x3(), 24, 24)
    k = gaussian_kernel(1.5)
    energy = [np.sum((C @ cls_restore(g, ClsConfig(a, k)).ravel()) ** 2) for a in (0.01, 0.05, 0.1, 1.0, 10.0)]
    assert all(b < a for a, b in zip(energy, energy[1:]))


def test_singular_blur_without_regularization():
    # the 5-tap pillbox response 0.2 (1 + 2 cos u + 2 cos v) vanishes at (pi/3, pi) on a 6x6 grid
    with pytest.raises(SingularFilter):
        cls_restore(np.ones((6, 6)), ClsConfig(0.0, pillbox_kernel(1.0)))
    out = cls_restore(np.ones((6, 6)), ClsConfig(0.05, pillbox_kernel(1.0)))
    np.testing.assert_allclose(out, 1.0, atol=1e-12)


def test_restores_blur_of_periodic_image():
    x = np.arange(16)
    f = 100 + 50 * np.cos(2 * np.pi * x / 16)[:, None] * np.cos(2 * np.pi * 2 * x / 16)[None, :]
    k = gaussian_kernel(1.0)
    g = (circulant(k.taps, 16, 16) @ f.ravel()).reshape(16, 16)
    np.testing.assert_allclose(cls_restore(g, ClsConfig(0.0, k)), f, atol=1e-8)
