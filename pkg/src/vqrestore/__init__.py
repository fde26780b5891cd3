"""Image restoration and blur identification with vector-quantization codebooks."""

from .blur_id import BicBank, build_bic, distortion_curve, identify
from .cls import ClsConfig, cls_restore, default_alpha, laplacian_3x3
from .degrade import (
    BlurKernel,
    DegradedPair,
    bsnr_db,
    convolve,
    degrade,
    gaussian_kernel,
    isnr_db,
    pillbox_kernel,
)
from .image_io import extract_block, local_variance_map, read_pgm, write_pgm
from .nnn import distance_transform, lazy_median, neighbor_values, nnn_restore
from .restore_vq import (
    FlatThreshold,
    TrainingConfig,
    build_training_pairs,
    classify_regions,
    restore,
    train_restoration_codebook,
)
from .vq import Codebook, distortion, encode, lbg_train, load_codebook, mean_distortion, save_codebook

__version__ = "0.1.0"
