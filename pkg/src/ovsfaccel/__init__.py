"""Weight generation from orthogonal binary codes for single-engine CNN accelerators.

Filters are stored as a few coefficients over Hadamard code vectors and
rebuilt on chip, trading off-chip weight traffic for generator cycles. The
package covers compression, a cycle-level generator model, a tiled GEMM
engine, analytical performance and resource models, and a design-space
search.
"""
__version__ = "0.1.0"

from .compress import OvsfCompressor, compress_layer, count_params, dense_weight_matrix, reconstruct_layer
from .dse import DesignSpaceExplorer, SearchSpace, search
from .engine import cycles_baseline, cycles_selective, im2col, schedule_sim, tiled_gemm
from .exceptions import *  # noqa: F401,F403
from .models import (LayerSpec, ModelSpec, PlatformSpec, RatioSchedule, apply_schedule, builtin_model,
                     builtin_platform, builtin_schedule)
from .ovsf import build_basis
from .perf import estimate
from .resources import feasible, usage
from .wgen import DesignPoint, simulate_wgen, tiwgen_reference

__all__ = [
    "OvsfCompressor", "compress_layer", "count_params", "dense_weight_matrix", "reconstruct_layer",
    "DesignSpaceExplorer", "SearchSpace", "search", "cycles_baseline", "cycles_selective", "im2col",
    "schedule_sim", "tiled_gemm", "LayerSpec", "ModelSpec", "PlatformSpec", "RatioSchedule",
    "apply_schedule", "builtin_model", "builtin_platform", "builtin_schedule", "build_basis", "estimate",
    "feasible", "usage", "DesignPoint", "simulate_wgen", "tiwgen_reference",
]
