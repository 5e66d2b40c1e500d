"""Input validation shared by the scikit-learn style wrappers."""

from __future__ import annotations

import numbers

import numpy as np

from .model import RegressionData


def check_n_treatment(n_treatment, n_features: int) -> int:
    if not isinstance(n_treatment, numbers.Integral) or n_treatment < 1:
        raise ValueError(f"n_treatment must be a positive integer, got {n_treatment!r}")
    if n_treatment >= n_features:
        raise ValueError(
            f"n_features = {n_features} leaves no control column after the "
            f"{n_treatment} treatment column(s)"
        )
    return int(n_treatment)


def split_design(X: np.ndarray, y: np.ndarray, n_treatment: int) -> RegressionData:
    """Treat the first ``n_treatment`` columns of ``X`` as treatment, the rest as controls."""
    t = check_n_treatment(n_treatment, X.shape[1])
    n, f = X.shape
    if n < f + 2:
        raise ValueError(f"n_samples = {n} is too small; need at least n_features + 2 = {f + 2}")
    return RegressionData(np.asarray(y, dtype=float), X[:, :t], X[:, t:])


def check_positive(value, name: str, allow_none: bool = True):
    if value is None:
        if allow_none:
            return None
        raise ValueError(f"{name} is required")
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)
