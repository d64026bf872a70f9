"""Optimal control of spectral fractional diffusion through the truncated extension problem."""

from .spectral import FracParams, SpectralCoefficients, exact_triple
from .mesh import graded_partition, tensor_cylinder, triangulate_square, uniform_square
from .solve import CylinderSolver, solve_adjoint, solve_state, trace
from .control import ReducedProblem, optimize, solve_p0_scheme
from .harness import ExperimentConfig, run_convergence, run_single

__all__ = [
    "CylinderSolver",
    "ExperimentConfig",
    "FracParams",
    "ReducedProblem",
    "SpectralCoefficients",
    "exact_triple",
    "graded_partition",
    "optimize",
    "run_convergence",
    "run_single",
    "solve_adjoint",
    "solve_p0_scheme",
    "solve_state",
    "tensor_cylinder",
    "trace",
    "triangulate_square",
    "uniform_square",
]
__version__ = "0.1.0"
