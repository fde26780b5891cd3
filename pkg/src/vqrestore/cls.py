"""Constrained least squares (CLS) restoration in the frequency domain.

    F = conj(H) G / (|H|^2 + alpha |C|^2)

with H and C the transfer functions of the blur and of a 3x3 Laplacian,
both under a periodic boundary model.
"""

from dataclasses import dataclass

import numpy as np

from .degrade import BlurKernel
from .image_io import as_image


class SingularFilter(ArithmeticError):
    """alpha == 0 and the blur transfer function vanishes somewhere."""


def laplacian_3x3():
    return np.array([[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class ClsConfig:
    alpha: float
    kernel: BlurKernel

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def default_alpha(bsnr_db: float) -> float:
    """Regularization weight as the reciprocal of the BSNR in dB (20 dB -> 0.05)."""
    if not bsnr_db > 0:
        raise ValueError(f"BSNR must be positive, got {bsnr_db}")
    return 1.0 / bsnr_db


def stencil_to_otf(stencil, shape):
    """Transfer function of a centre-anchored stencil on a periodic grid.

    Taps that fall outside a grid smaller than the stencil wrap around, which
    is exactly the circulant operator the stencil induces on that grid.
    """
    stencil = np.asarray(stencil, dtype=np.float64)
    kh, kw = stencil.shape
    h, w = shape
    rows = (np.arange(kh) - kh // 2) % h
    cols = (np.arange(kw) - kw // 2) % w
    psf = np.zeros(shape)
    np.add.at(psf, np.ix_(rows, cols), stencil)
    return np.fft.fft2(psf)


def cls_restore(degraded, cfg: ClsConfig) -> np.ndarray:
    g = as_image(degraded)
    H = stencil_to_otf(cfg.kernel.taps, g.shape)
    H2 = np.abs(H) ** 2
    if cfg.alpha == 0.0:
        if H2.min() <= 1e-24 * H2.max():
            raise SingularFilter("blur transfer function has zeros and alpha is 0")
        denom = H2
    else:
        C = stencil_to_otf(laplacian_3x3(), g.shape)
        denom = H2 + cfg.alpha * np.abs(C) ** 2
    F = np.conj(H) * np.fft.fft2(g) / denom
    return np.real(np.fft.ifft2(F))
