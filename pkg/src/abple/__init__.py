"""Worst-case local entropy of the asymmetric binary perceptron.

The second level of lifted random duality reduces the entropy of solutions
at a fixed overlap with a reference vertex to a six-parameter saddle point.
This package evaluates that functional and its gradient, solves the
stationarity system, sweeps curves in the overlap, detects where the
overlap coupling collapses, and cross-checks the definition by brute force
on small instances.
"""
from .kernels import LiftingParams, ModelParams, psi_rd, residuals
from .numerics import gauss_hermite_grid, log_erfc, log_mean_pow
from .oracle import empirical_curve, empirical_local_entropy, enumerate_solutions, sample_instance
from .saddle import Branch, SaddleSolution, SolverOptions, continuation_sweep, solve
from .sweep import Curve, CurvePoint, build_curve, detect_breakdown, s_max

__all__ = [
    "Branch", "Curve", "CurvePoint", "LiftingParams", "ModelParams", "SaddleSolution",
    "SolverOptions", "build_curve", "continuation_sweep", "detect_breakdown",
    "empirical_curve", "empirical_local_entropy", "enumerate_solutions",
    "gauss_hermite_grid", "log_erfc", "log_mean_pow", "psi_rd", "residuals",
    "s_max", "sample_instance", "solve",
]
__version__ = "0.1.0"
