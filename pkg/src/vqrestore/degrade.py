"""Blur kernels, the blur + additive-noise degradation model, and BSNR/ISNR.

Noise is drawn from ``numpy.random.default_rng(seed)`` (PCG64 bit generator,
ziggurat Gaussian transform), so a given seed reproduces the same
realization bit-for-bit on any platform numpy supports.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .image_io import as_image, mirror_pad

FAMILIES = ("gaussian", "pillbox", "delta")


@dataclass(frozen=True)
class BlurKernel:
    """Unit-sum, radially symmetric point-spread function.

    ``param`` is the variance for ``gaussian``, the radius in pixels for
    ``pillbox`` and unused (0) for ``delta``. ``taps`` is a square array of
    side ``2 * half_width + 1`` with the origin at its centre.
    """

    family: str
    param: float
    taps: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown blur family {self.family!r}")
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1] or taps.shape[0] % 2 == 0:
            raise ValueError("kernel taps must be a square array of odd side")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def half_width(self) -> int:
        return self.taps.shape[0] // 2

    def __eq__(self, other):
        if not isinstance(other, BlurKernel):
            return NotImplemented
        return (self.family, self.param) == (other.family, other.param) and np.array_equal(
            self.taps, other.taps
        )

    def __hash__(self):
        return hash((self.family, self.param, self.taps.tobytes()))


def _offsets(half_width):
    r = np.arange(-half_width, half_width + 1, dtype=np.float64)
    return np.meshgrid(r, r, indexing="ij")


def gaussian_kernel(sigma2: float) -> BlurKernel:
    """Sampled Gaussian of variance `sigma2`, truncated at ceil(3 sigma)."""
    if not sigma2 > 0:
        raise ValueError(f"Gaussian variance must be positive, got {sigma2}")
    hw = math.ceil(3.0 * math.sqrt(sigma2))
    y, x = _offsets(hw)
    taps = np.exp(-(x * x + y * y) / (2.0 * sigma2))
    return BlurKernel("gaussian", float(sigma2), taps / taps.sum())


def pillbox_kernel(radius: float) -> BlurKernel:
    """Uniform disk of the given radius, sampled on the integer grid.

    Discrete sampling does not preserve the analytic 1/(pi r^2) height, so
    the taps inside the disk are renormalized to sum to one.
    """
    if not radius > 0:
        raise ValueError(f"pillbox radius must be positive, got {radius}")
    hw = math.ceil(radius)
    y, x = _offsets(hw)
    taps = (np.sqrt(x * x + y * y) <= radius).astype(np.float64)
    return BlurKernel("pillbox", float(radius), taps / taps.sum())


def delta_kernel() -> BlurKernel:
    return BlurKernel("delta", 0.0, np.ones((1, 1)))


def make_kernel(family: str, param: float) -> BlurKernel:
    if family == "gaussian":
        return gaussian_kernel(param)
    if family == "pillbox":
        return pillbox_kernel(param)
    if family == "delta":
        return delta_kernel()
    raise ValueError(f"unknown blur family {family!r}")


def convolve(image, kernel: BlurKernel) -> np.ndarray:
    """Correlate the mirror-padded image with `kernel`; output has the input's shape.

    Taps are accumulated one at a time in row-major order, so every output
    pixel sees the same fixed summation order.
    """
    img = as_image(image)
    taps = kernel.taps
    hw = kernel.half_width
    if hw == 0:
        return img * taps[0, 0]
    h, w = img.shape
    padded = mirror_pad(img, hw)
    out = np.zeros_like(img)
    side = 2 * hw + 1
    for dy in range(side):
        for dx in range(side):
            t = taps[dy, dx]
            if t != 0.0:
                out += t * padded[dy : dy + h, dx : dx + w]
    return out


@dataclass(frozen=True)
class DegradedPair:
    original: np.ndarray
    blurred_noiseless: np.ndarray
    degraded: np.ndarray
    noise_variance: float
    target_bsnr_db: float
    realized_bsnr_db: float
    seed: int


def gaussian_noise(shape, variance, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape) * math.sqrt(variance)


def degrade(image, kernel: BlurKernel, target_bsnr_db: float, seed: int = 0) -> DegradedPair:
    """Blur `image` and add white Gaussian noise calibrated to `target_bsnr_db`."""
    img = as_image(image)
    if img.size < 2:
        raise ValueError("need at least two pixels to define a BSNR")
    if not math.isfinite(target_bsnr_db):
        raise ValueError("target BSNR must be finite")
    blurred = convolve(img, kernel)
    signal_var = float(np.var(blurred))
    if signal_var == 0.0:
        raise ValueError("blurred image is constant; BSNR is undefined")
    noise_var = signal_var / 10.0 ** (target_bsnr_db / 10.0)
    noise = gaussian_noise(img.shape, noise_var, seed)
    realized = bsnr_db(blurred, float(np.var(noise)))
    return DegradedPair(
        original=img,
        blurred_noiseless=blurred,
        degraded=blurred + noise,
        noise_variance=noise_var,
        target_bsnr_db=float(target_bsnr_db),
        realized_bsnr_db=realized,
        seed=seed,
    )


def bsnr_db(blurred_noiseless, noise_variance: float) -> float:
    """10 log10 of blurred-signal variance over noise variance."""
    if not noise_variance > 0:
        raise ValueError("noise variance must be positive")
    signal_var = float(np.var(as_image(blurred_noiseless)))
    if signal_var == 0.0:
        raise ValueError("blurred image is constant; BSNR is undefined")
    return 10.0 * math.log10(signal_var / noise_variance)


class InfiniteIsnr(ArithmeticError):
    """Raised when the restored image equals the original exactly."""


def isnr_db(original, degraded, restored) -> float:
    """Improvement in SNR: 10 log10(||f - g||^2 / ||f - r||^2).

    Positive values mean the restoration moved closer to the original.
    """
    f, g, r = (as_image(a) for a in (original, degraded, restored))
    if not (f.shape == g.shape == r.shape):
        raise ValueError(f"shape mismatch: {f.shape}, {g.shape}, {r.shape}")
    before = float(np.sum((f - g) ** 2))
    after = float(np.sum((f - r) ** 2))
    if after == 0.0:
        raise InfiniteIsnr("restored image equals the original; ISNR is infinite")
    if before == 0.0:
        # already perfect input; any change is an unbounded loss
        return -math.inf
    return 10.0 * math.log10(before / after)
