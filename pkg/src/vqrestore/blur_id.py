"""Blur identification with a bank of codebooks, one per candidate blur parameter.

The observed image's blocks are quantized against every codebook in the
bank; the candidate whose codebook yields the smallest mean distortion is
taken as the blur parameter.
"""

import os
from dataclasses import dataclass, replace

from .degrade import make_kernel
from .image_io import as_image, block_vectors
from .restore_vq import TrainingConfig, train_restoration_codebook
from .vq import Codebook, load_codebook, mean_distortion, save_codebook

MANIFEST_MAGIC = "BIC v1"


class ManifestError(ValueError):
    pass


@dataclass
class BicBank:
    family: str
    params: list
    codebooks: list
    reference_bsnr_db: float
    block_size: int
    stride: int = 1

    def __post_init__(self):
        if not self.params:
            raise ValueError("bank needs at least one candidate")
        if len(self.params) != len(self.codebooks):
            raise ValueError("params and codebooks differ in length")
        if any(b <= a for a, b in zip(self.params, self.params[1:])):
            raise ValueError("candidate parameters must be strictly increasing")
        if any(cb.block_size != self.block_size for cb in self.codebooks):
            raise ValueError("all codebooks must share the bank's block size")


def build_bic(prototypes, family, params, cfg: TrainingConfig) -> BicBank:
    """Train one codebook per candidate parameter at ``cfg.target_bsnr_db``.

    Every candidate reuses ``cfg.seed``, so all codebooks see the same noise
    realizations and differ only in the blur.
    """
    params = [float(p) for p in params]
    if not params:
        raise ValueError("need at least one candidate parameter")
    if any(b <= a for a, b in zip(params, params[1:])):
        raise ValueError("candidate parameters must be strictly increasing")
    prototypes = [as_image(p) for p in prototypes]
    codebooks = [
        train_restoration_codebook(prototypes, replace(cfg, kernel=make_kernel(family, p)))
        for p in params
    ]
    return BicBank(family, params, codebooks, cfg.target_bsnr_db, cfg.block_size, cfg.stride)


def distortion_curve(bank: BicBank, degraded, stride=None):
    """``[(param, mean distortion), ...]`` in bank order."""
    g = as_image(degraded)
    b = bank.block_size
    if g.shape[0] < b or g.shape[1] < b:
        raise ValueError(f"{g.shape[0]}x{g.shape[1]} image is smaller than a {b}x{b} block")
    vecs = block_vectors(g, b, bank.stride if stride is None else stride)
    return [(p, mean_distortion(cb, vecs)) for p, cb in zip(bank.params, bank.codebooks)]


def identify(bank: BicBank, degraded, stride=None):
    """Candidate parameter with the least mean distortion, and the full curve.

    Ties resolve to the smaller parameter.
    """
    curve = distortion_curve(bank, degraded, stride)
    best = min(range(len(curve)), key=lambda i: (curve[i][1], i))
    return curve[best][0], curve


def bank_files(bank: BicBank, manifest_path):
    """Map of path -> bytes for the manifest and one VQCB file per candidate.

    Codebooks sit beside the manifest and are referenced by relative path.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    stem = os.path.splitext(os.path.basename(manifest_path))[0]
    lines = [f"{MANIFEST_MAGIC} family={bank.family} bsnr={bank.reference_bsnr_db!r} block={bank.block_size}"]
    files = {}
    for i, (p, cb) in enumerate(zip(bank.params, bank.codebooks)):
        name = f"{stem}_{i:02d}.vqcb"
        files[os.path.join(base, name)] = save_codebook(cb)
        lines.append(f"{p!r}\t{name}")
    files[os.path.abspath(manifest_path)] = ("\n".join(lines) + "\n").encode()
    return files


def write_bank(bank: BicBank, manifest_path):
    for path, data in bank_files(bank, manifest_path).items():
        with open(path, "wb") as fh:
            fh.write(data)


def read_bank(manifest_path, stride=1) -> BicBank:
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith(MANIFEST_MAGIC):
        raise ManifestError(f"{manifest_path}: missing '{MANIFEST_MAGIC}' header")
    fields = dict(tok.split("=", 1) for tok in lines[0][len(MANIFEST_MAGIC) :].split() if "=" in tok)
    try:
        family = fields["family"]
        bsnr = float(fields["bsnr"])
        block = int(fields["block"])
    except (KeyError, ValueError) as exc:
        raise ManifestError(f"{manifest_path}: bad header {lines[0]!r}") from exc
    params, codebooks = [], []
    for ln in lines[1:]:
        try:
            p, rel = ln.split("\t")
            params.append(float(p))
        except ValueError as exc:
            raise ManifestError(f"{manifest_path}: bad candidate line {ln!r}") from exc
        with open(os.path.join(base, rel), "rb") as fh:
            cb: Codebook = load_codebook(fh.read())
        if cb.family != family:
            raise ManifestError(f"{rel}: codebook family {cb.family} != bank family {family}")
        codebooks.append(cb)
    try:
        return BicBank(family, params, codebooks, bsnr, block, stride)
    except ValueError as exc:
        raise ManifestError(f"{manifest_path}: {exc}") from exc


