"""Grayscale image handling: binary PGM I/O, block extraction and local statistics.

Images are plain 2-D ``numpy.ndarray`` objects of dtype float64, indexed
``[row, col]``. Nothing in this package mutates an image it receives.
Whenever a window leaves the image it is filled by mirror padding that
does not repeat the edge sample (``d c b | a b c d | c b a``).
"""

import re

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class PgmError(ValueError):
    """Base class for PGM decoding failures."""


class PgmMagicError(PgmError):
    pass


class PgmHeaderError(PgmError):
    pass


class PgmMaxvalError(PgmError):
    pass


class PgmTruncatedError(PgmError):
    pass


_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def as_image(data):
    """Return `data` as a finite 2-D float64 array, raising ValueError otherwise."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite intensities")
    return img


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) PGM with maxval <= 255.

    Comments in the header are tolerated. Intensities are returned as read,
    without rescaling by maxval.
    """
    if data[:2] != b"P5":
        raise PgmMagicError(f"unsupported magic {data[:2]!r}; only P5 is supported")
    pos = 2
    fields = []
    for _ in range(3):
        m = _HEADER_TOKEN.match(data, pos)
        if m is None:
            raise PgmHeaderError("header ended before width, height and maxval")
        token = m.group(1)
        if not token.isdigit():
            raise PgmHeaderError(f"non-numeric header field {token!r}")
        fields.append(int(token))
        pos = m.end()
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmHeaderError(f"invalid dimensions {width}x{height}")
    if maxval < 1:
        raise PgmHeaderError(f"invalid maxval {maxval}")
    if maxval > 255:
        raise PgmMaxvalError(f"maxval {maxval} > 255 (16-bit PGM is not supported)")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data):
        raise PgmTruncatedError("no pixel data")
    if not data[pos : pos + 1].isspace():
        raise PgmHeaderError("missing whitespace after maxval")
    pos += 1
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise PgmTruncatedError(f"expected {need} pixel bytes, found {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float64)


def to_bytes8(image) -> np.ndarray:
    """Round half-up and clamp to [0, 255], returning uint8."""
    img = np.asarray(image, dtype=np.float64)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def write_pgm(image) -> bytes:
    img = as_image(image)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + to_bytes8(img).tobytes()


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_pgm(fh.read())


def _check_side(side):
    if side < 1 or side % 2 != 1:
        raise ValueError(f"window side must be a positive odd integer, got {side}")


def mirror_pad(image, half):
    """Pad by `half` pixels on every side with reflect-without-repeat."""
    return np.pad(image, half, mode="reflect")


def extract_block(image, row, col, side):
    """Return the ``side x side`` block centred on (row, col)."""
    _check_side(side)
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if not (0 <= row < h and 0 <= col < w):
        raise IndexError(f"block centre ({row}, {col}) outside {h}x{w} image")
    half = side // 2
    rows = _reflect_index(np.arange(row - half, row + half + 1), h)
    cols = _reflect_index(np.arange(col - half, col + half + 1), w)
    return img[np.ix_(rows, cols)]


def _reflect_index(idx, n):
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def block_windows(image, side, stride=1):
    """All mirror-padded blocks as a ``(rows, cols, side, side)`` view.

    One block per centre ``(r, c)`` with r and c stepping by `stride` from 0.
    """
    _check_side(side)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    img = as_image(image)
    padded = mirror_pad(img, side // 2)
    return sliding_window_view(padded, (side, side))[::stride, ::stride]


def block_vectors(image, side, stride=1):
    """Blocks flattened row-major into an ``(n_blocks, side**2)`` array."""
    win = block_windows(image, side, stride)
    return np.ascontiguousarray(win).reshape(-1, side * side)


def local_variance_map(image, side):
    """Population variance of each pixel's mirror-padded ``side x side`` window."""
    win = block_windows(image, side)
    mean = win.mean(axis=(2, 3), keepdims=True)
    var = ((win - mean) ** 2).mean(axis=(2, 3))
    # a constant window has variance exactly zero, whatever the rounding in mean
    flat = win.max(axis=(2, 3)) == win.min(axis=(2, 3))
    var[flat] = 0.0
    return var
