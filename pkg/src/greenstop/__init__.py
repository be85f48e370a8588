"""Threshold rules for discounted optimal stopping of a jump-driven OU process.

The Green kernel of the process is built by Fourier inversion, the threshold
is the root of a tail-integral equation, and a Monte Carlo simulator serves
as an independent cross-check.
"""

from .errors import (
    GreenstopError,
    GridResolutionError,
    GridResolutionWarning,
    NoThresholdError,
    ParameterError,
    QuadratureError,
)
from .kernel_fourier import FourierGrid, KernelGrid, build_kernel_grid, ghat
from .kernel_oracle import BrownianKernel, FourierGreenKernel, GreenKernel, GridKernel
from .model import EXAMPLE_1, EXAMPLE_2, ModelParams, Problem
from .montecarlo import PolicyEstimate, SimConfig, estimate_policy_value, optimality_scan
from .solver import SolveConfig, SolveReport, solve, value_function

__version__ = "0.1.0"

__all__ = [
    "BrownianKernel", "EXAMPLE_1", "EXAMPLE_2", "FourierGreenKernel", "FourierGrid", "GreenKernel",
    "GreenstopError", "GridKernel", "GridResolutionError", "GridResolutionWarning", "KernelGrid",
    "ModelParams", "NoThresholdError", "ParameterError", "PolicyEstimate", "Problem", "QuadratureError",
    "SimConfig", "SolveConfig", "SolveReport", "build_kernel_grid", "estimate_policy_value", "ghat",
    "optimality_scan", "solve", "value_function",
]
