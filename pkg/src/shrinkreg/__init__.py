"""Unbiased partial shrinkage of control coefficients in linear regression."""

from .canon import CanonicalBasis, CanonicalForm, GroupElement, build_basis, transform
from .estimators import (
    EstimateResult,
    EstimatorSpec,
    empirical_bayes,
    estimate,
    generalized_bayes,
    ols_long,
    ols_short,
    seminorm_gamma,
    shrink_gamma,
)
from .exceptions import ConfigurationError, DominanceWarning, RankDeficiencyError
from .model import CovariateModel, DgpConfig, ModelParams, RegressionData, make_config, simulate
from .regressors import TwoStepRegressor
from .risk import RiskReport, mc_risk, prediction_loss

__version__ = "0.1.0"

__all__ = [
    "CanonicalBasis",
    "CanonicalForm",
    "ConfigurationError",
    "CovariateModel",
    "DgpConfig",
    "DominanceWarning",
    "EstimateResult",
    "EstimatorSpec",
    "GroupElement",
    "ModelParams",
    "RankDeficiencyError",
    "RegressionData",
    "RiskReport",
    "TwoStepRegressor",
    "build_basis",
    "empirical_bayes",
    "estimate",
    "generalized_bayes",
    "make_config",
    "mc_risk",
    "ols_long",
    "ols_short",
    "prediction_loss",
    "seminorm_gamma",
    "shrink_gamma",
    "simulate",
    "transform",
]
