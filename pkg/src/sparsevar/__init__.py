"""Sparse VAR estimation by penalized quasi-maximum likelihood."""
from .penalties import PenaltySpec, penalty_derivative, penalty_value, local_concavity, diagnose
from .var_core import (
    VarParams, NoiseSpec, TimeSeriesData, companion_matrix, is_stable, simulate, build_regression,
    reference_design, reference_noise,
)
from .qml import (
    WeightingMatrix, loglik, score, hessian, sandwich_covariance, certify_local_max, CertificateReport,
)
from .solver import (
    FitConfig, FitResult, univariate_update, lambda_max, coordinate_descent, fit_path, cross_validate,
    cv_fit, oracle_fit,
)

__version__ = "0.1.0"
