"""N-nearest-neighbour (NNN) repair of corrupted pixels.

A chessboard distance transform gives each corrupted pixel the radius of
the first square ring that contains a good pixel. Good pixels are then
gathered ring by ring until at least ``n`` have been seen, and the pixel is
replaced by the lazy median of that set. Replacements read only the input
image, never other replacements, so the result does not depend on scan order.
"""

import numpy as np

from .image_io import as_image


class AllCorrupt(ValueError):
    """The mask leaves no good pixel to restore from."""


def as_mask(mask, shape=None):
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError("corruption mask must be 2-D")
    if shape is not None and m.shape != tuple(shape):
        raise ValueError(f"mask shape {m.shape} does not match image shape {tuple(shape)}")
    return m


def distance_transform(mask) -> np.ndarray:
    """Chessboard distance from every pixel to the nearest good (False) pixel.

    Two raster passes of the 3x3 chamfer mask with unit weights, which is
    exact for the chessboard metric. Within a row the left-to-right
    recursion ``d[c] = min(d[c], d[c-1] + 1)`` is evaluated as
    ``cummin(d - c) + c``.
    """
    corrupt = as_mask(mask)
    if corrupt.all():
        raise AllCorrupt("every pixel is corrupted")
    h, w = corrupt.shape
    big = h + w
    d = np.where(corrupt, big, 0).astype(np.int64)
    ramp = np.arange(w)
    pad = np.full(1, big, dtype=np.int64)

    for r in range(h):
        if r > 0:
            up = np.concatenate((pad, d[r - 1], pad))
            d[r] = np.minimum(d[r], np.minimum(np.minimum(up[:-2], up[1:-1]), up[2:]) + 1)
        d[r] = np.minimum.accumulate(d[r] - ramp) + ramp

    back = ramp[::-1]
    for r in range(h - 1, -1, -1):
        if r < h - 1:
            down = np.concatenate((pad, d[r + 1], pad))
            d[r] = np.minimum(d[r], np.minimum(np.minimum(down[:-2], down[1:-1]), down[2:]) + 1)
        d[r] = (np.minimum.accumulate((d[r] - back)[::-1]) + ramp)[::-1]
    return d


def ring(row, col, k, shape):
    """In-bounds pixels at chessboard distance exactly `k`, in row-major order."""
    h, w = shape
    if k == 0:
        return [(row, col)]
    out = []
    c0, c1 = max(col - k, 0), min(col + k, w - 1)
    for r in range(max(row - k, 0), min(row + k, h - 1) + 1):
        if abs(r - row) == k:
            out.extend((r, c) for c in range(c0, c1 + 1))
        else:
            if col - k >= 0:
                out.append((r, col - k))
            if col + k < w:
                out.append((r, col + k))
    return out


def neighbor_values(image, mask, distimg, row, col, n=3):
    """Good-pixel values from whole rings around (row, col), starting at its distance.

    Rings are added until the running count reaches `n` (or the image is
    exhausted), so the last ring always contributes all of its good pixels.
    """
    img = np.asarray(image)
    corrupt = as_mask(mask, img.shape)
    d = int(distimg[row, col])
    if d == 0:
        raise ValueError(f"pixel ({row}, {col}) is not corrupted")
    if n < 1:
        raise ValueError("n must be >= 1")
    h, w = img.shape
    kmax = max(row, col, h - 1 - row, w - 1 - col)
    values = []
    k = d
    while k <= kmax:
        values.extend(img[r, c] for r, c in ring(row, col, k, img.shape) if not corrupt[r, c])
        if len(values) >= n:
            break
        k += 1
    return values


def lazy_median(values):
    """Median that is always an element of `values`; lower middle for even counts."""
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if v.size == 0:
        raise ValueError("lazy median of an empty set")
    return float(v[(v.size - 1) // 2])


def nnn_restore(image, mask, n=3) -> np.ndarray:
    img = as_image(image)
    corrupt = as_mask(mask, img.shape)
    if n < 1:
        raise ValueError("n must be >= 1")
    dist = distance_transform(corrupt)
    out = img.copy()
    for r, c in zip(*np.nonzero(corrupt)):
        out[r, c] = lazy_median(neighbor_values(img, corrupt, dist, r, c, n))
    return out


def salt_corrupt(image, fraction, seed=0, value=255.0):
    """Set a seeded random `fraction` of pixels to `value`.

    Returns
    -------
    corrupted : ndarray
    mask : ndarray of bool, True where a pixel was overwritten
    """
    img = as_image(image)
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    count = int(round(fraction * img.size))
    picked = rng.choice(img.size, size=count, replace=False)
    mask = np.zeros(img.size, dtype=bool)
    mask[picked] = True
    mask = mask.reshape(img.shape)
    out = img.copy()
    out[mask] = value
    return out, mask
