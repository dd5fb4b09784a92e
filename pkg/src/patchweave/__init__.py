"""Nonlocal patch-based joint inpainting and denoising.

The restoration alternates a softmax weight update over candidate patch
centers with a pointwise image update, optionally coarse to fine.
"""

from .errors import (
    CandidateSetEmptyError,
    ConfigurationError,
    EmptyRegionError,
    PatchweaveError,
    SolverError,
)
from .image import (
    NoiseSpec,
    RegionMask,
    add_gaussian_noise,
    dilate_mask,
    extend,
    known_mean_fill,
    mse,
    psnr,
)
from .io import read_image, read_mask, read_pgm, write_image, write_mask, write_pgm
from .multiscale import Pyramid, build_pyramid, default_n_levels, solve_multiscale, upsample_init
from .patches import Mollifier, PatchKernel, make_gaussian_kernel, mollify, patch_distance
from .solver import (
    EnergyBreakdown,
    SolverConfig,
    SolverState,
    energy,
    iterate,
    mixture_neg_log_likelihood,
    solve,
    solve_decoupled,
    update_image,
)
from .weights import (
    SearchConfig,
    WeightField,
    candidate_set,
    entropy,
    extended_weight,
    update_weights,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateSetEmptyError",
    "ConfigurationError",
    "EmptyRegionError",
    "EnergyBreakdown",
    "Mollifier",
    "NoiseSpec",
    "PatchKernel",
    "PatchweaveError",
    "Pyramid",
    "RegionMask",
    "SearchConfig",
    "SolverConfig",
    "SolverError",
    "SolverState",
    "WeightField",
    "add_gaussian_noise",
    "build_pyramid",
    "candidate_set",
    "default_n_levels",
    "dilate_mask",
    "energy",
    "entropy",
    "extend",
    "extended_weight",
    "iterate",
    "known_mean_fill",
    "make_gaussian_kernel",
    "mixture_neg_log_likelihood",
    "mollify",
    "mse",
    "patch_distance",
    "psnr",
    "read_image",
    "read_mask",
    "read_pgm",
    "solve",
    "solve_decoupled",
    "solve_multiscale",
    "update_image",
    "update_weights",
    "upsample_init",
    "write_image",
    "write_mask",
    "write_pgm",
]
