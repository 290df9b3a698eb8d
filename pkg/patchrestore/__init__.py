# patchrestore - patch-based image restoration from training pairs
# Copyright (C) 2014 Ingo Ruhnke <grumbel@gmail.com>
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

__version__ = "0.1.0"

from .image import ImageFormatError, PatchGrid, extract_patch, scatter_patch_add, extract_patches, \
    scatter_patches_add, coverage_counts, psnr, format_psnr, load_image, save_image, quantize, \
    bicubic_resize, synthetic_image
from .degrade import DegradationOperator, Identity, Blur, Downsample, Mask, NoiseModel, \
    apply, apply_adjoint, load_kernel, save_kernel
from .features import KernelModel, dct_features, dct_features_batch, bandwidth_from_dataset, \
    kernel_from_dataset, kernel_eval, kernel_vector, kernel_vectors, kernel_matrix
from .weights import nw_weights, nw_weights_batch, krr_weights, krr_lambda
from .linsolve import CGConfig, NonConvergenceError, IndefiniteOperatorError, conjugate_gradient, \
    image_operator
from .dataset import PatchDataset, DatasetFormatError, sample_patch_dataset, save_dataset, load_dataset
from .sdca import SDCAConfig, DualState, ConvergedError, dual_gap, compute_dual_gaps, gap_sample, \
    z_update_sdca, sdca_patches
from .restore import solve_mse, x_update, energy_l2, splitting_energy, hqs_restore, mse_restore, \
    initial_estimate, compute_weights, write_trace
from .theory import estimate_q, correlation_map, mean_correlation_map, c_bound, \
    Denoising, Inpainting, Downsampling
from .config import SolverConfig, ExperimentConfig, ConfigError, build_config, read_config_file
from .bench import run, StageError

__all__ = [
    "ImageFormatError", "PatchGrid", "extract_patch", "scatter_patch_add", "extract_patches",
    "scatter_patches_add", "coverage_counts", "psnr", "format_psnr", "load_image", "save_image", "quantize",
    "bicubic_resize", "synthetic_image",
    "DegradationOperator", "Identity", "Blur", "Downsample", "Mask", "NoiseModel",
    "apply", "apply_adjoint", "load_kernel", "save_kernel",
    "KernelModel", "dct_features", "dct_features_batch", "bandwidth_from_dataset",
    "kernel_from_dataset", "kernel_eval", "kernel_vector", "kernel_vectors", "kernel_matrix",
    "nw_weights", "nw_weights_batch", "krr_weights", "krr_lambda",
    "CGConfig", "NonConvergenceError", "IndefiniteOperatorError", "conjugate_gradient",
    "image_operator",
    "PatchDataset", "DatasetFormatError", "sample_patch_dataset", "save_dataset", "load_dataset",
    "SDCAConfig", "DualState", "ConvergedError", "dual_gap", "compute_dual_gaps", "gap_sample",
    "z_update_sdca", "sdca_patches",
    "solve_mse", "x_update", "energy_l2", "splitting_energy", "hqs_restore", "mse_restore",
    "initial_estimate", "compute_weights", "write_trace",
    "estimate_q", "correlation_map", "mean_correlation_map", "c_bound",
    "Denoising", "Inpainting", "Downsampling",
    "SolverConfig", "ExperimentConfig", "ConfigError", "build_config", "read_config_file",
    "run", "StageError",
]

# EOF #
