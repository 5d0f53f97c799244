"""Ridge rerandomization for randomized experiments.

Calibrate balance thresholds from the weighted chi-square law of the ridge
Mahalanobis distance, select the ridge parameter, sample accepted
assignments and run randomization inference.
"""
from importlib.metadata import PackageNotFoundError, version

from .balance import BalanceCriterion, Kind, euclidean, is_accepted, mahalanobis, ridge_mahalanobis, truncated_mahalanobis
from .calibrate import (
    CalibrationResult,
    DesignBudget,
    calibrate_criterion,
    calibrate_fixed,
    calibrate_threshold,
    estimate_d,
    estimate_v,
    select_lambda,
)
from .core import CovariateMatrix, Spectrum, compute_spectrum, load_covariates, mean_difference, save_covariates
from .errors import (
    AcceptanceError,
    CalibrationError,
    InputError,
    NumericalError,
    QuadratureError,
    RidgeRerandError,
    SingularCovarianceError,
)
from .inference import InferenceResult, OutcomeData, invert_ci, randomization_pvalue, tau_hat
from .sampler import RerandomizationOutcome, draw_assignment, rerandomize, sample_accepted
from .simulate import SimulationSpec, StudyMetrics, figure1_demo, gen_covariates, gen_outcomes, run_study, worst_case_beta
from .wchi2 import WeightedChiSquare, chi2_cdf, chi2_quantile, chi2_va, imhof_cdf, ridge_weights, wchi2_quantile

try:
    __version__ = version("ridgererand")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

__all__ = [name for name in dir() if not name.startswith("_") and name not in {"version", "PackageNotFoundError"}]
