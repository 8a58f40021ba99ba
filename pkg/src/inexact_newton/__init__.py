"""Inexact Newton regularization in Hilbert scales.

Outer Newton steps with inner Landweber, implicit, asymptotic or Tikhonov
schemes, stopped by the discrepancy principle.
"""

from .exceptions import (ConfigError, DegenerateOperatorError, DimensionError,
                         InexactNewtonError, InnerInfeasibleError, InnerStallError,
                         NumericalError, StudyError)
from .forward_models import (DiagonalLinearModel, ForwardModel, HammersteinModel, NoisyData,
                             SourceSpec, make_diagonal_linear_model, make_hammerstein_model,
                             make_noisy_data, make_problem, make_source_solution,
                             rescale_model)
from .hilbert_scale import ScaleBasis, apply_power, check_interpolation, norm_t
from .inner_solvers import InnerProblem, InnerResult, solve_inner, spectral_inner
from .newton_driver import (RunTrace, SolverConfig, StopReason, residual_bounds_check, solve,
                            verify_trace)
from .oracle_lab import DenseSVD, build_dense
from .spectral_filters import FilterKind, check_filter_inequalities
from .studies import StudySpec, run_count_study, run_rate_study, run_single

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateOperatorError", "DenseSVD", "DiagonalLinearModel",
    "DimensionError", "FilterKind", "ForwardModel", "HammersteinModel", "InexactNewtonError",
    "InnerInfeasibleError", "InnerProblem", "InnerResult", "InnerStallError", "NoisyData",
    "NumericalError", "RunTrace", "ScaleBasis", "SolverConfig", "SourceSpec", "StopReason",
    "StudyError", "StudySpec", "apply_power", "build_dense", "check_filter_inequalities",
    "check_interpolation", "make_diagonal_linear_model", "make_hammerstein_model",
    "make_noisy_data", "make_problem", "make_source_solution", "norm_t", "rescale_model",
    "residual_bounds_check", "run_count_study", "run_rate_study", "run_single", "solve",
    "solve_inner", "spectral_inner", "verify_trace",
]
