"""Scattering moments of time series.

Multiscale moment descriptors built from iterated wavelet-modulus
averages, simulators for the classic self-similar and multifractal
process families, and model fitting by the simulated method of moments
with a chi-squared goodness of fit.
"""

__version__ = "0.1.0"

from .analysis import (
    IntermittencyReport,
    SlopeFit,
    StationarityReport,
    fit_log2_slope,
    intermittency_summary,
    stationarity_across_scales,
)
from .estimation import (
    AlphaRegression,
    GmmFit,
    Lam2Regression,
    MomentCondition,
    chi2_survival,
    default_j_for_intermittency,
    empirical_weight,
    gmm_one_step,
    gmm_two_step,
    log_covariance_regression,
    scattering_slope_regression,
    wavelet_moment_regression,
)
from .estimators import GenerativeModelGMM, ScatteringTransform
from .processes import FAMILIES, ProcessSpec, SimulatedEnsemble, simulate, zeta
from .scattering import (
    NormalizedScattering,
    ScatteringVector,
    error_bound,
    normalize,
    per_block_scatter,
    scatter,
    vector_from_json,
    vector_to_csv,
    vector_to_json,
)
from .signal import (
    SeasonalProfile,
    TimeSeries,
    deseasonalize,
    load_csv,
    segment,
    write_csv,
)
from .wavelet import (
    FilterBank,
    WaveletCoeffs,
    bank_from_json,
    bank_to_json,
    build_filter_bank,
    fractional_derivative,
    transform,
    verify_littlewood_paley,
    verify_phi,
)

__all__ = [
    "__version__",
    "AlphaRegression",
    "FAMILIES",
    "FilterBank",
    "GenerativeModelGMM",
    "GmmFit",
    "IntermittencyReport",
    "Lam2Regression",
    "MomentCondition",
    "NormalizedScattering",
    "ProcessSpec",
    "ScatteringTransform",
    "ScatteringVector",
    "SeasonalProfile",
    "SimulatedEnsemble",
    "SlopeFit",
    "StationarityReport",
    "TimeSeries",
    "WaveletCoeffs",
    "bank_from_json",
    "bank_to_json",
    "build_filter_bank",
    "chi2_survival",
    "default_j_for_intermittency",
    "deseasonalize",
    "empirical_weight",
    "error_bound",
    "fit_log2_slope",
    "fractional_derivative",
    "gmm_one_step",
    "gmm_two_step",
    "intermittency_summary",
    "load_csv",
    "log_covariance_regression",
    "normalize",
    "per_block_scatter",
    "scatter",
    "scattering_slope_regression",
    "segment",
    "simulate",
    "stationarity_across_scales",
    "transform",
    "vector_from_json",
    "vector_to_csv",
    "vector_to_json",
    "verify_littlewood_paley",
    "verify_phi",
    "wavelet_moment_regression",
    "write_csv",
    "zeta",
]
