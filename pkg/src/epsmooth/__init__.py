"""Edge-preserving image denoising.

Detects edge pixels with local plane fits and a gradient-difference
statistic, then smooths each pixel adaptively: local polynomial kernel
regression over an edge-avoiding elliptical neighborhood away from edges,
local-clustering weighted averaging near them.  Includes synthetic scenes,
PGM/PNG I/O, a Monte-Carlo RMSE benchmark, and a CLI.
"""

from .bench import BenchRow, read_csv, replicate_seed, run_bench, write_csv
from .cluster import (
    ClusterParams,
    ClusterSplit,
    cluster_smooth_pixel,
    optimal_threshold,
    patch_weight,
    variance_ratio,
)
from .edges import (
    EdgeDetectParams,
    EdgeMap,
    PlaneFit,
    PlaneFitField,
    chi2_quantile_2df,
    delta_statistic,
    detect_edges,
    estimate_sigma,
    fit_local_plane,
    fit_planes,
)
from .geometry import (
    EdgeDistanceIndex,
    Ellipse,
    build_ellipse,
    build_index,
    nearest_edge,
    second_point,
)
from .grid import ImageGrid, NoiseSpec, SceneSpec, add_noise, rmse, synth
from .io import read_image, write_image
from .kernelfit import FitResult, KernelSpec, kernel_weight, local_poly_fit
from .pipeline import (
    MODES,
    DenoiseDebug,
    DenoiseParams,
    default_params,
    denoise,
    denoise_debug,
)

__version__ = "0.1.0"

__all__ = [
    "ImageGrid", "NoiseSpec", "SceneSpec", "synth", "add_noise", "rmse",
    "read_image", "write_image",
    "PlaneFit", "PlaneFitField", "EdgeDetectParams", "EdgeMap",
    "fit_local_plane", "fit_planes", "estimate_sigma", "chi2_quantile_2df",
    "delta_statistic", "detect_edges",
    "Ellipse", "EdgeDistanceIndex", "build_index", "nearest_edge",
    "second_point", "build_ellipse",
    "KernelSpec", "FitResult", "kernel_weight", "local_poly_fit",
    "ClusterParams", "ClusterSplit", "variance_ratio", "optimal_threshold",
    "patch_weight", "cluster_smooth_pixel",
    "MODES", "DenoiseParams", "DenoiseDebug", "default_params", "denoise",
    "denoise_debug",
    "BenchRow", "replicate_seed", "run_bench", "write_csv", "read_csv",
    "__version__",
]
