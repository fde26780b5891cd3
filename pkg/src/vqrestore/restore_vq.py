"""Learning the low-to-high frequency mapping from prototype images and
applying it to restore a degraded image.

The degraded image itself plays the part of the low-frequency component:
each training pair is a degraded block and the residual
``original - degraded`` at the block centre. Restoration looks up the
nearest codeword of each block and adds back that codeword's residual,
but only where the local variance says the image is not flat.
"""

from dataclasses import dataclass

import numpy as np

from .degrade import BlurKernel, degrade
from .image_io import as_image, block_vectors, block_windows, local_variance_map
from .vq import Codebook, attach_high, lbg_train, nearest


@dataclass(frozen=True)
class TrainingConfig:
    kernel: BlurKernel
    target_bsnr_db: float = 20.0
    block_size: int = 7
    stride: int = 1
    T: int = 32
    seed: int = 0
    epsilon: float = 1e-4
    max_iters: int = 100

    def __post_init__(self):
        if self.block_size < 1 or self.block_size % 2 == 0:
            raise ValueError(f"block size must be odd, got {self.block_size}")
        if self.T < 1 or self.T & (self.T - 1):
            raise ValueError(f"T must be a power of two, got {self.T}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class FlatThreshold:
    """Local-variance threshold (intensity^2) separating flat from nonflat pixels."""

    tau: float
    window: int = 7

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be >= 0")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")

    @classmethod
    def from_noise_variance(cls, noise_variance, window=7, factor=4.0):
        return cls(tau=factor * noise_variance, window=window)


def build_training_pairs(original, degraded, block_size=7, stride=1):
    """Degraded blocks and centre residuals on a `stride` grid.

    Returns
    -------
    low : ndarray, shape (n, block_size**2)
    high : ndarray, shape (n,)
    """
    f = as_image(original)
    g = as_image(degraded)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
    low = block_vectors(g, block_size, stride)
    high = (f - g)[::stride, ::stride].reshape(-1)
    return low, high


def train_restoration_codebook(prototypes, cfg: TrainingConfig) -> Codebook:
    """Degrade each prototype per `cfg`, pool the pairs and run LBG.

    Prototype ``i`` is degraded with noise seed ``cfg.seed + i``. A constant
    prototype has no blurred-signal variance to calibrate noise against, and
    blur leaves it unchanged, so it is paired with itself (zero residual).
    """
    prototypes = list(prototypes)
    if not prototypes:
        raise ValueError("need at least one prototype image")
    lows, highs = [], []
    for i, proto in enumerate(prototypes):
        proto = as_image(proto)
        if proto.max() == proto.min():
            degraded = proto
        else:
            degraded = degrade(proto, cfg.kernel, cfg.target_bsnr_db, seed=cfg.seed + i).degraded
        lo, hi = build_training_pairs(proto, degraded, cfg.block_size, cfg.stride)
        lows.append(lo)
        highs.append(hi)
    low = np.concatenate(lows)
    high = np.concatenate(highs)
    if low.shape[0] < cfg.T:
        raise ValueError(f"only {low.shape[0]} training pairs for T={cfg.T} codewords")
    codes = lbg_train(low, cfg.T, cfg.epsilon, cfg.max_iters, seed=cfg.seed)
    return Codebook(
        block_size=cfg.block_size,
        low=codes,
        high=attach_high(codes, low, high),
        family=cfg.kernel.family,
        param=cfg.kernel.param,
        bsnr_db=cfg.target_bsnr_db,
    )


def classify_regions(degraded, thr: FlatThreshold) -> np.ndarray:
    """Boolean mask, True where the local variance exceeds ``thr.tau``."""
    return local_variance_map(degraded, thr.window) > thr.tau


def restore(degraded, codebook: Codebook, thr: FlatThreshold) -> np.ndarray:
    """Add the codebook's residual to every nonflat pixel; flat pixels pass through."""
    g = as_image(degraded)
    nonflat = classify_regions(g, thr)
    out = g.copy()
    if not nonflat.any():
        return out
    b = codebook.block_size
    blocks = block_windows(g, b)[nonflat].reshape(-1, b * b)
    idx, _ = nearest(blocks, codebook.low)
    out[nonflat] += codebook.high[idx]
    return out
