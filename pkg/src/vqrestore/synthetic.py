"""Synthetic piecewise-smooth test images: step edges, bars, checkerboards, ramps.

Every generator is a pure function of its arguments. ``family_image``
draws the geometric parameters of a family member from a seed, so the
prototype set and held-out test images come from the same distribution
but never coincide.
"""

import math

import numpy as np

FAMILIES = ("steps", "bars", "checker", "ramps")

LOW, HIGH = 40.0, 210.0


def _coords(size, angle):
    r, c = np.mgrid[0:size, 0:size].astype(np.float64)
    r -= (size - 1) / 2.0
    c -= (size - 1) / 2.0
    u = c * math.cos(angle) + r * math.sin(angle)
    v = -c * math.sin(angle) + r * math.cos(angle)
    return u, v


def steps(size, edges, low=LOW, high=HIGH):
    """Two-level image cut by straight step edges.

    `edges` is a sequence of ``(angle, offset)`` lines; a pixel is `high`
    when it lies on the positive side of an odd number of them.
    """
    parity = np.zeros((size, size), dtype=bool)
    for angle, offset in edges:
        u, _ = _coords(size, angle)
        parity ^= u + offset >= 0
    return np.where(parity, high, low)


def bars(size, angle, period, width, offset, low=LOW, high=HIGH):
    u, _ = _coords(size, angle)
    on = np.mod(u + offset, period) < width
    return np.where(on, high, low)


def checker(size, angle, cell, offset, low=LOW, high=HIGH):
    u, v = _coords(size, angle)
    parity = (np.floor((u + offset) / cell) + np.floor((v + offset) / cell)) % 2
    return np.where(parity == 0, low, high)


def ramps(size, angle, period, offset, low=LOW, high=HIGH):
    """Sawtooth: linear ramps from `low` to `high`, each ending in a drop."""
    u, _ = _coords(size, angle)
    frac = np.mod(u + offset, period) / period
    return low + (high - low) * frac


def _family_patch(family, rng, size):
    angle = rng.uniform(0.0, math.pi)
    offset = rng.uniform(0.0, 64.0)
    if family == "steps":
        n = int(rng.integers(1, 4))
        edges = [(rng.uniform(0.0, math.pi), rng.uniform(-0.4, 0.4) * size) for _ in range(n)]
        return steps(size, edges)
    if family == "bars":
        period = rng.uniform(12.0, 24.0)
        width = rng.uniform(0.3, 0.6) * period
        return bars(size, angle, period, width, offset)
    if family == "checker":
        cell = rng.uniform(10.0, 22.0)
        return checker(size, angle, cell, offset)
    if family == "ramps":
        period = rng.uniform(16.0, 40.0)
        return ramps(size, angle, period, offset)
    raise ValueError(f"unknown synthetic family {family!r}")


def family_image(family, seed, size=256, tile=64):
    """A `size` x `size` member of `family`, tiled from independent patches.

    Each ``tile x tile`` patch draws its own orientation, spacing and phase
    from `seed`, so a single image covers the family's geometry broadly.
    """
    if size % tile:
        raise ValueError("size must be a multiple of tile")
    rng = np.random.default_rng(seed)
    n = size // tile
    rows = [[_family_patch(family, rng, tile) for _ in range(n)] for _ in range(n)]
    return np.block(rows)


def mosaic(images):
    """Quadrant mosaic of four equal square images, each cropped to its top-left quarter."""
    if len(images) != 4:
        raise ValueError("mosaic needs exactly four images")
    half = images[0].shape[0] // 2
    q = [np.asarray(im)[:half, :half] for im in images]
    return np.block([[q[0], q[1]], [q[2], q[3]]])


def prototype_set(seed=0, size=256):
    """One image per family, in ``FAMILIES`` order."""
    return [family_image(fam, seed * 1000 + i, size) for i, fam in enumerate(FAMILIES)]


def held_out_set(seed=0, size=256):
    """A second, disjoint draw of one image per family."""
    return [family_image(fam, seed * 1000 + 500 + i, size) for i, fam in enumerate(FAMILIES)]
