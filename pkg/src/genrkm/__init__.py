"""Generative restricted kernel machines: multi-view latent subspaces learned
by eigendecomposition, with kernel or neural feature maps."""
from .data_io import Dataset, ModelFile, generate_toy_gaussians, load_model, save_model
from .generation import (GenerationConfig, fit_gmm, generate, kernel_smoother_preimage,
                         sample_gmm)
from .kernels import KernelSpec
from .objective import ObjectiveConfig
from .subspace import LatentModel, ViewConfig, encode, solve_dual, solve_primal
from .training import TrainConfig, train_explicit, train_implicit

__all__ = [
    "Dataset", "ModelFile", "generate_toy_gaussians", "load_model", "save_model",
    "GenerationConfig", "fit_gmm", "generate", "kernel_smoother_preimage", "sample_gmm",
    "KernelSpec", "ObjectiveConfig", "LatentModel", "ViewConfig", "encode", "solve_dual",
    "solve_primal", "TrainConfig", "train_explicit", "train_implicit",
]
