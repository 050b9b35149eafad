"""Regularized solvers for the Cauchy problem ``u_tt = A u + f(t, u)``."""
from .errors import ConvergenceError, OverflowGuardError
from .grid import GridSolution
from .kernels import KernelFamily, KernelVariant, RegParams
from .linear_solver import CauchyData, NoiseModel, add_noise, exact_solution, regularized_solution
from .semilinear_solver import MarchingConfig, Nonlinearity, SolverMode, march_solve, picard_solve, solve
from .spectral_core import BasisKind, EigenSystem, SpectralVector

__version__ = "0.1.0"

__all__ = [
    "BasisKind",
    "CauchyData",
    "ConvergenceError",
    "EigenSystem",
    "GridSolution",
    "KernelFamily",
    "KernelVariant",
    "MarchingConfig",
    "NoiseModel",
    "Nonlinearity",
    "OverflowGuardError",
    "RegParams",
    "SolverMode",
    "SpectralVector",
    "add_noise",
    "exact_solution",
    "march_solve",
    "picard_solve",
    "regularized_solution",
    "solve",
]
