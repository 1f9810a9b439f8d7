"""Conditional-sum-of-squares estimation of fractionally integrated time series."""

from fracfit.asymptotics import InfoMatrixA, info_matrix, wald_test
from fracfit.css import AdmissibleSet, FitResult, OptimizerOptions, estimate, objective, score_and_hessian
from fracfit.filtering import ParamPoint, residuals
from fracfit.fraccoef import FracWeights, convolve_trunc, digamma, frac_coeffs, log_weights
from fracfit.mc import McConfig, McReport, run_mc
from fracfit.multivar import (
    MvModel,
    MvStepResult,
    Restriction,
    common,
    det_objective,
    from_assignment,
    initial_estimate,
    matrix_B,
    mv_residuals,
    one_step,
    unrestricted,
)
from fracfit.shortmem import ShortMemSpec, arma, bloomfield, from_string, identity
from fracfit.simulate import MvSimSpec, SimSpec, simulate, simulate_mv

__version__ = "0.1.0"

__all__ = [
    "AdmissibleSet",
    "FitResult",
    "FracWeights",
    "InfoMatrixA",
    "McConfig",
    "McReport",
    "MvModel",
    "MvSimSpec",
    "MvStepResult",
    "OptimizerOptions",
    "ParamPoint",
    "Restriction",
    "ShortMemSpec",
    "SimSpec",
    "arma",
    "bloomfield",
    "common",
    "convolve_trunc",
    "det_objective",
    "digamma",
    "estimate",
    "frac_coeffs",
    "from_assignment",
    "from_string",
    "identity",
    "info_matrix",
    "initial_estimate",
    "log_weights",
    "matrix_B",
    "mv_residuals",
    "objective",
    "one_step",
    "residuals",
    "run_mc",
    "score_and_hessian",
    "simulate",
    "simulate_mv",
    "unrestricted",
    "wald_test",
    "__version__",
]
