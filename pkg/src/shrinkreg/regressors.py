"""scikit-learn compatible wrapper around the two-step estimators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import check_positive, split_design
from .estimators import KINDS, EstimatorSpec, estimate, plugin_variances


class TwoStepRegressor(RegressorMixin, BaseEstimator):
    """Linear regression with a shrunken control block and an unshrunk treatment block.

    The first ``n_treatment`` columns of ``X`` are the treatment regressors;
    the remaining columns are controls. The controls' coefficients are
    estimated by ``method`` and the treatment coefficients by least squares
    of the control-adjusted outcome on the treatment, so under exogenous
    treatment ``treatment_coef_`` stays unbiased whatever the control rule.

    Parameters
    ----------
    method : {"eb", "shrink", "shrink-pp", "ols-long", "ols-short", "gbayes"}, default="eb"
        Rule for the control coefficients.
    n_treatment : int, default=1
        Number of leading columns of ``X`` that are treatment regressors.
    p : float, optional
        Shrinkage weight for ``shrink`` and ``shrink-pp``. Defaults to the
        empirical-Bayes weight ``(k - 2) / (n - m - k - 1)``.
    tau2 : float, optional
        Prior scale of the control coefficients; required for ``gbayes``.
    sigma2 : float, optional
        Noise variance for ``gbayes``; estimated from the long regression if
        omitted.
    sigma_w : array-like of shape (k, k), optional
        Control covariance for ``gbayes``; the sample analog is used if
        omitted.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Treatment coefficients followed by control coefficients.
    intercept_ : float
    treatment_coef_ : ndarray of shape (n_treatment,)
    control_coef_ : ndarray of shape (n_features - n_treatment,)
    shrink_factor_ : float
    result_ : EstimateResult
    """

    def __init__(self, method="eb", n_treatment=1, p=None, tau2=None, sigma2=None, sigma_w=None):
        self.method = method
        self.n_treatment = n_treatment
        self.p = p
        self.tau2 = tau2
        self.sigma2 = sigma2
        self.sigma_w = sigma_w

    def _spec(self, data) -> EstimatorSpec:
        if self.method not in KINDS:
            raise ValueError(f"method must be one of {KINDS}, got {self.method!r}")
        if self.method in ("shrink", "shrink-pp"):
            return EstimatorSpec(self.method, p=self.p)
        if self.method == "gbayes":
            tau2 = check_positive(self.tau2, "tau2", allow_none=False)
            sigma2, sigma_w = self.sigma2, self.sigma_w
            if sigma2 is None or sigma_w is None:
                est_sigma2, est_sigma_w = plugin_variances(data)
                sigma2 = est_sigma2 if sigma2 is None else sigma2
                sigma_w = est_sigma_w if sigma_w is None else sigma_w
            return EstimatorSpec("gbayes", tau2=tau2, sigma2=sigma2, sigma_w=np.asarray(sigma_w, dtype=float))
        return EstimatorSpec(self.method)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True, dtype=np.float64)
        data = split_design(X, y, self.n_treatment)
        self.result_ = estimate(data, self._spec(data))
        self.treatment_coef_ = np.asarray(self.result_.beta_hat)
        self.control_coef_ = np.asarray(self.result_.gamma_hat)
        self.coef_ = np.concatenate([self.treatment_coef_, self.control_coef_])
        self.intercept_ = self.result_.alpha_hat
        self.shrink_factor_ = self.result_.shrink_factor
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_ + self.intercept_
