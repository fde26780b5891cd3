"""Vector quantization: squared-error distortion, nearest-codeword search,
LBG codebook design and the VQCB codebook file format.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

FAMILY_TAGS = {"gaussian": 0, "pillbox": 1, "delta": 2}
_TAG_FAMILIES = {v: k for k, v in FAMILY_TAGS.items()}

VQCB_MAGIC = b"VQCB"
VQCB_VERSION = 1
_HEADER = struct.Struct("<4sIIIBdd")

# rows per chunk when building query/codeword distance tables
_CHUNK = 4096


class CodebookFormatError(ValueError):
    pass


class BadMagic(CodebookFormatError):
    pass


class BadVersion(CodebookFormatError):
    pass


class Truncated(CodebookFormatError):
    pass


@dataclass(eq=False)
class Codebook:
    """T codewords, each a low-frequency block vector plus a high-frequency scalar.

    ``low`` has shape ``(T, block_size**2)`` and ``high`` shape ``(T,)``.
    The nearest-neighbour cells of ``low`` under squared error define the
    quantizer; ``high`` is the residual attached to each cell.
    """

    block_size: int
    low: np.ndarray = field(repr=False)
    high: np.ndarray = field(repr=False)
    family: str = "gaussian"
    param: float = 0.0
    bsnr_db: float = 0.0

    def __post_init__(self):
        if self.block_size < 1 or self.block_size % 2 == 0:
            raise ValueError(f"block size must be odd, got {self.block_size}")
        self.low = np.atleast_2d(np.asarray(self.low, dtype=np.float64))
        self.high = np.asarray(self.high, dtype=np.float64).reshape(-1)
        if self.low.shape[0] < 1:
            raise ValueError("codebook needs at least one codeword")
        if self.low.shape[1] != self.block_size**2:
            raise ValueError(
                f"codewords have length {self.low.shape[1]}, expected {self.block_size ** 2}"
            )
        if self.high.shape[0] != self.low.shape[0]:
            raise ValueError("low and high codeword counts differ")
        if self.family not in FAMILY_TAGS:
            raise ValueError(f"unknown blur family {self.family!r}")
        if not (np.all(np.isfinite(self.low)) and np.all(np.isfinite(self.high))):
            raise ValueError("codewords must be finite")

    @property
    def size(self) -> int:
        return self.low.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.block_size == other.block_size
            and self.family == other.family
            and self.param == other.param
            and self.bsnr_db == other.bsnr_db
            and np.array_equal(self.low, other.low)
            and np.array_equal(self.high, other.high)
        )


def distortion(a, b) -> float:
    """Squared Euclidean distance ``sum((a - b)**2)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


def _direct_sqdist(vecs, codevectors):
    return np.sum((vecs[:, None, :] - codevectors[None, :, :]) ** 2, axis=2)


def nearest(vecs, codevectors):
    """Index of, and squared distance to, the nearest codevector for each row.

    Ties go to the lowest index. Candidates are screened with the
    ``|x|^2 - 2 x.c + |c|^2`` expansion; any row whose two best screened
    distances are within the expansion's rounding margin is re-scored with
    direct squared differences, and every returned distance is computed
    directly. The result therefore equals an exhaustive scan with
    :func:`distortion`.
    """
    vecs = np.atleast_2d(np.asarray(vecs, dtype=np.float64))
    codevectors = np.atleast_2d(np.asarray(codevectors, dtype=np.float64))
    if codevectors.shape[0] == 0:
        raise ValueError("empty codebook")
    if vecs.shape[1] != codevectors.shape[1]:
        raise ValueError(
            f"vector length {vecs.shape[1]} does not match codeword length {codevectors.shape[1]}"
        )
    n, t = vecs.shape[0], codevectors.shape[0]
    cc = np.einsum("ij,ij->i", codevectors, codevectors)
    idx = np.empty(n, dtype=np.intp)
    for start in range(0, n, _CHUNK):
        x = vecs[start : start + _CHUNK]
        xx = np.einsum("ij,ij->i", x, x)
        approx = xx[:, None] - 2.0 * (x @ codevectors.T) + cc[None, :]
        k = np.argmin(approx, axis=1)
        if t > 1:
            two = np.partition(approx, 1, axis=1)[:, :2]
            margin = 1e-9 * (xx + cc.max()) + 1e-300
            close = np.flatnonzero(two[:, 1] - two[:, 0] <= margin)
            if close.size:
                k[close] = np.argmin(_direct_sqdist(x[close], codevectors), axis=1)
        idx[start : start + _CHUNK] = k
    dist = np.sum((vecs - codevectors[idx]) ** 2, axis=1)
    return idx, dist


def encode(codebook: Codebook, vec) -> int:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("encode takes a single vector")
    return int(nearest(vec[None, :], codebook.low)[0][0])


def encode_many(codebook: Codebook, vecs) -> np.ndarray:
    return nearest(vecs, codebook.low)[0]


def mean_distortion(codebook: Codebook, vecs) -> float:
    """Sample estimate of the expected distortion of the quantizer on `vecs`."""
    vecs = np.asarray(vecs, dtype=np.float64)
    if vecs.ndim != 2 or vecs.shape[0] == 0:
        raise ValueError("need a non-empty 2-D array of vectors")
    return float(np.mean(nearest(vecs, codebook.low)[1]))


def _split_perturbation(c, delta, rng):
    # c(1 +/- delta) collapses for zero components; nudge those by delta instead
    sign = np.where(rng.random(c.shape) < 0.5, -1.0, 1.0)
    return np.where(c != 0.0, c, sign) * delta


def _cell_sums(vecs, labels, counts):
    """Per-cell vector sums for the non-empty cells, accumulated in input order."""
    order = np.argsort(labels, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[counts > 0]
    return np.add.reduceat(vecs[order], starts, axis=0)


def _lloyd(vecs, codes, epsilon, max_iters):
    """Lloyd iterations from `codes`; returns (codes, distortion per iteration)."""
    history = []
    prev = prev_codes = None
    t = codes.shape[0]
    for _ in range(max_iters):
        labels, err = nearest(vecs, codes)
        d = float(np.mean(err))
        if prev is not None and d > prev:
            # a Lloyd step cannot raise distortion in exact arithmetic; this is
            # rounding in the centroid sums, so keep the previous codevectors
            return prev_codes, history
        history.append(d)
        if d == 0.0 or (prev is not None and (prev - d) <= epsilon * prev):
            break
        prev, prev_codes = d, codes
        counts = np.bincount(labels, minlength=t)
        filled = counts > 0
        codes = codes.copy()
        codes[filled] = _cell_sums(vecs, labels, counts) / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if empty.size:
            err = np.sum((vecs - codes[labels]) ** 2, axis=1)
        for k in empty:
            worst = int(np.argmax(err))
            codes[k] = vecs[worst]
            err = np.minimum(err, np.sum((vecs - codes[k]) ** 2, axis=1))
    return codes, history


def lbg_train(vecs, T, epsilon=1e-4, max_iters=100, seed=0, delta=0.01, return_history=False):
    """Design `T` codevectors by binary splitting plus Lloyd refinement.

    Starting from the global centroid, every codevector c is split into
    ``c (1 + delta)`` and ``c (1 - delta)`` and the doubled set is refined by
    Lloyd iterations until the relative drop in mean distortion falls below
    `epsilon` or `max_iters` is reached. An empty cell is re-seeded with the
    training vector that currently has the largest quantization error.

    `seed` only picks the split direction for zero-valued components, where
    multiplicative splitting would produce two identical codevectors.

    Returns
    -------
    codevectors : ndarray, shape (T, dim)
    history : list of list of float
        Only if `return_history`. Mean distortion at each Lloyd iteration,
        one list per splitting phase.
    """
    vecs = np.asarray(vecs, dtype=np.float64)
    if vecs.ndim != 2:
        raise ValueError("training vectors must form a 2-D array")
    if T < 1 or T & (T - 1):
        raise ValueError(f"T must be a power of two, got {T}")
    if vecs.shape[0] < T:
        raise ValueError(f"need at least T={T} training vectors, got {vecs.shape[0]}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    rng = np.random.default_rng(seed)

    codes, hist = _lloyd(vecs, vecs.mean(axis=0, keepdims=True), epsilon, max_iters)
    history = [hist]
    while codes.shape[0] < T:
        p = _split_perturbation(codes, delta, rng)
        # interleave so the children of codeword i sit at 2i and 2i+1
        codes = np.stack([codes + p, codes - p], axis=1).reshape(-1, codes.shape[1])
        codes, hist = _lloyd(vecs, codes, epsilon, max_iters)
        history.append(hist)
    if return_history:
        return codes, history
    return codes


def attach_high(low_codevectors, pairs_low, pairs_high):
    """Mean high scalar per cell; cells that receive no training pair get 0."""
    low_codevectors = np.atleast_2d(np.asarray(low_codevectors, dtype=np.float64))
    pairs_low = np.atleast_2d(np.asarray(pairs_low, dtype=np.float64))
    pairs_high = np.asarray(pairs_high, dtype=np.float64).reshape(-1)
    if pairs_low.shape[0] == 0:
        raise ValueError("no training pairs")
    if pairs_low.shape[0] != pairs_high.shape[0]:
        raise ValueError("low vectors and high scalars differ in count")
    labels, _ = nearest(pairs_low, low_codevectors)
    t = low_codevectors.shape[0]
    counts = np.bincount(labels, minlength=t)
    sums = np.bincount(labels, weights=pairs_high, minlength=t)
    high = np.zeros(t)
    filled = counts > 0
    high[filled] = sums[filled] / counts[filled]
    return high


def save_codebook(codebook: Codebook) -> bytes:
    header = _HEADER.pack(
        VQCB_MAGIC,
        VQCB_VERSION,
        codebook.block_size,
        codebook.size,
        FAMILY_TAGS[codebook.family],
        float(codebook.param),
        float(codebook.bsnr_db),
    )
    records = np.column_stack([codebook.low, codebook.high]).astype("<f8")
    return header + records.tobytes()


def load_codebook(data: bytes) -> Codebook:
    if len(data) < 4 or data[:4] != VQCB_MAGIC:
        raise BadMagic(f"not a VQCB codebook (magic {data[:4]!r})")
    if len(data) < _HEADER.size:
        raise Truncated("codebook header is truncated")
    _, version, block_size, t, tag, param, bsnr = _HEADER.unpack_from(data)
    if version != VQCB_VERSION:
        raise BadVersion(f"unsupported VQCB version {version}")
    if tag not in _TAG_FAMILIES:
        raise CodebookFormatError(f"unknown blur family tag {tag}")
    width = block_size * block_size + 1
    need = _HEADER.size + 8 * t * width
    if len(data) < need:
        raise Truncated(f"expected {need} bytes, found {len(data)}")
    if len(data) > need:
        raise CodebookFormatError(f"{len(data) - need} trailing bytes after codebook")
    rec = np.frombuffer(data, dtype="<f8", count=t * width, offset=_HEADER.size)
    rec = rec.astype(np.float64).reshape(t, width)
    return Codebook(
        block_size=block_size,
        low=rec[:, :-1],
        high=rec[:, -1],
        family=_TAG_FAMILIES[tag],
        param=param,
        bsnr_db=bsnr,
    )
