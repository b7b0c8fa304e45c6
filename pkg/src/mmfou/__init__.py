"""Mixtures of fractional Ornstein-Uhlenbeck processes: covariance, simulation and moment estimation."""

from .errors import DomainError, EstimationError, MmfouError, NumericError, ValidationError
from .model import (
    EXACT,
    SMALL_LAG,
    ParameterSpace,
    ParameterVector,
    acov,
    acov_exact,
    acov_gradient,
    acov_smallt,
    check_normality_conditions,
    lambda_consistency_bound,
    sdf,
    sdf_folded,
)
from .filters import FilterBank, Filter, b_vector, build_filter_bank, finite_difference_filter
from .simulate import SamplePath, SimulationConfig, fbm_path, fou_path, mmfou_path
from .gmm import EstimateOptions, EstimateResult, GmmProblem, estimate, objective, solve
from .asymptotics import asymptotic_covariance, asymptotic_report, consistency_check, is_p_matrix
from .montecarlo import BenchmarkConfig, MetricsReport, compute_metrics, run_benchmark

__version__ = "0.1.0"
