"""Soft K-pattern image segmentation with simplex-constrained phase fields."""

from .driver import (RunAborted, RunConfig, RunResult, RunTrace, run_pc_sms,
                     run_sms, update_means)
from .energy import (EnergyBreakdown, ModelParams, data_energy, harden,
                     mm_energy, pc_energy, permute, sigmoid_profile,
                     total_energy)
from .estimator import SoftSegmenter
from .fields import (dirichlet_energy, integrate, laplacian_neumann,
                     normal_derivative_boundary)
from .simplex import simplex_project, tangent_project, validate_stack
from .solvers import (SolverOptions, el_residual, mean_V,
                      ownership_linearized_step, solve_ownerships,
                      solve_pattern_channel)
from .supervision import Patch, Supervision

__all__ = [
    "EnergyBreakdown", "ModelParams", "Patch", "RunAborted", "RunConfig",
    "RunResult", "RunTrace", "SoftSegmenter", "SolverOptions", "Supervision",
    "data_energy", "dirichlet_energy", "el_residual", "harden", "integrate",
    "laplacian_neumann", "mean_V", "mm_energy", "normal_derivative_boundary",
    "ownership_linearized_step", "pc_energy", "permute", "run_pc_sms",
    "run_sms", "sigmoid_profile", "simplex_project", "solve_ownerships",
    "solve_pattern_channel", "tangent_project", "total_energy",
    "update_means", "validate_stack",
]

__version__ = "0.1.0"
