"""Three-stage variational segmentation for degraded color images.

Stage 1 smooths each channel by minimizing a convex total-variation
energy (quadratic or count-data fidelity, optional blur operator and
missing-pixel mask). Stage 2 lifts the smoothed RGB image into a
6-channel stack with its rescaled Lab transform. Stage 3 clusters the
stack with K-means into K phases. The stack is cached on disk, so K can
be changed without re-running the solvers.
"""

__version__ = "0.1.0"

from .degradations import DegradationSpec, add_gaussian, add_poisson, degrade, random_loss
from .errors import FormatError, NumericalError, SlatError, ValidationError
from .image import (
    Image,
    LabelMap,
    Mask,
    load_image,
    load_labels,
    load_raw,
    rescale_to_unit,
    save_image,
    save_labels,
    save_raw,
)
from .lifting import lift, rgb_to_hsv, srgb_to_lab
from .linops import LinearOperator, identity_operator, vertical_box_blur
from .metrics import AccuracyReport, accuracy, psnr
from .pipeline import PipelineConfig, rethreshold, run_experiment, run_pipeline
from .smoothing import (
    SmoothingProblem,
    SolverConfig,
    energy,
    smooth_all,
    solve,
    solve_l2,
    solve_poisson,
)
from .synthetic import make_four_phase, make_pyramid, make_six_phase
from .thresholding import Segmentation, assign_phases, kmeans, render_phases, segment

__all__ = [
    "AccuracyReport",
    "DegradationSpec",
    "FormatError",
    "Image",
    "LabelMap",
    "LinearOperator",
    "Mask",
    "NumericalError",
    "PipelineConfig",
    "Segmentation",
    "SlatError",
    "SmoothingProblem",
    "SolverConfig",
    "ValidationError",
    "accuracy",
    "add_gaussian",
    "add_poisson",
    "assign_phases",
    "degrade",
    "energy",
    "identity_operator",
    "kmeans",
    "lift",
    "load_image",
    "load_labels",
    "load_raw",
    "make_four_phase",
    "make_pyramid",
    "make_six_phase",
    "psnr",
    "random_loss",
    "render_phases",
    "rescale_to_unit",
    "rethreshold",
    "rgb_to_hsv",
    "run_experiment",
    "run_pipeline",
    "save_image",
    "save_labels",
    "save_raw",
    "segment",
    "smooth_all",
    "solve",
    "solve_l2",
    "solve_poisson",
    "srgb_to_lab",
    "vertical_box_blur",
]
