"""Regression data containers, ground-truth parameters and the Gaussian DGP.

The data-generating process conditions on a fixed treatment design ``x``::

    W_i | x ~ N(alpha_w + x_i beta_w, sigma_w)      (iid rows)
    Y = 1 alpha + x beta + W gamma + U,   U ~ N(0, sigma2 I_n)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np
from scipy.linalg import lapack

from . import _rng
from .exceptions import ConfigurationError, DimensionError

XDesign = Union[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Observed outcome ``y`` (n,), treatment ``x`` (n, m) and controls ``w`` (n, k)."""

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if w.ndim == 1:
            w = w[:, None]
        if y.ndim != 1:
            raise DimensionError(f"y must be one-dimensional, got shape {y.shape}")
        if x.ndim != 2 or w.ndim != 2:
            raise DimensionError("x and w must be two-dimensional")
        if not (len(y) == x.shape[0] == w.shape[0]):
            raise DimensionError(
                f"row counts disagree: y has {len(y)}, x has {x.shape[0]}, w has {w.shape[0]}"
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def k(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Outcome equation: intercept, treatment effect, control coefficients, noise variance.

    ``sigma2 = 0`` is accepted so that noiseless data can be generated.
    """

    alpha: float
    beta: np.ndarray
    gamma: np.ndarray
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not np.isfinite(self.sigma2) or self.sigma2 < 0:
            raise ConfigurationError("must be a non-negative finite number", field="sigma2")


@dataclass(frozen=True, eq=False)
class CovariateModel:
    """Conditional law of the controls given the treatment design."""

    alpha_w: np.ndarray
    beta_w: np.ndarray
    sigma_w: np.ndarray

    def __post_init__(self):
        alpha_w = np.atleast_1d(np.asarray(self.alpha_w, dtype=float))
        beta_w = np.atleast_2d(np.asarray(self.beta_w, dtype=float))
        sigma_w = np.atleast_2d(np.asarray(self.sigma_w, dtype=float))
        k = alpha_w.shape[0]
        if sigma_w.shape != (k, k):
            raise ConfigurationError(f"expected shape ({k}, {k}), got {sigma_w.shape}", field="sigma_w")
        if beta_w.shape[1] != k:
            raise ConfigurationError(f"expected {k} columns, got {beta_w.shape[1]}", field="beta_w")
        check_spd(sigma_w, name="sigma_w")
        object.__setattr__(self, "alpha_w", alpha_w)
        object.__setattr__(self, "beta_w", beta_w)
        object.__setattr__(self, "sigma_w", sigma_w)

    @property
    def exogenous(self) -> bool:
        return not np.any(self.beta_w)


@dataclass(frozen=True, eq=False)
class DgpConfig:
    n: int
    m: int
    k: int
    params: ModelParams
    covariates: CovariateModel
    x_design: XDesign = "gaussian"
    seed: int = 0
    _x: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("n", "m", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError("must be a positive integer", field=name)
        n, m, k = self.n, self.m, self.k
        if n < 1 + m + k:
            raise ConfigurationError(f"need n >= 1 + m + k = {1 + m + k}, got {n}", field="n")
        if self.params.beta.shape != (m,):
            raise ConfigurationError(f"expected length {m}, got {self.params.beta.shape[0]}", field="beta")
        if self.params.gamma.shape != (k,):
            raise ConfigurationError(f"expected length {k}, got {self.params.gamma.shape[0]}", field="gamma")
        if self.covariates.alpha_w.shape != (k,):
            raise ConfigurationError(f"expected length {k}", field="alpha_w")
        if self.covariates.beta_w.shape != (m, k):
            raise ConfigurationError(f"expected shape ({m}, {k})", field="beta_w")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("must be an unsigned 64-bit integer", field="seed")
        object.__setattr__(self, "seed", int(self.seed))
        if isinstance(self.x_design, str):
            if self.x_design != "gaussian":
                raise ConfigurationError("must be 'gaussian' or an explicit matrix", field="x_design")
            x = _rng.substream(self.seed, _rng.DESIGN, 0).standard_normal((n, m))
        else:
            x = np.array(self.x_design, dtype=float).reshape(n, m)
            if not np.all(np.isfinite(x)):
                raise ConfigurationError("entries must be finite", field="x_design")
            object.__setattr__(self, "x_design", x)
        x.setflags(write=False)
        object.__setattr__(self, "_x", x)

    @property
    def x(self) -> np.ndarray:
        """The fixed treatment design shared by every replication."""
        return self._x

    def replace(self, **changes: Any) -> "DgpConfig":
        d = self.to_dict()
        d.update(changes)
        return DgpConfig.from_dict(d)

    def to_dict(self) -> dict:
        x_design = self.x_design if isinstance(self.x_design, str) else self.x_design.ravel().tolist()
        return {
            "n": self.n,
            "m": self.m,
            "k": self.k,
            "alpha": self.params.alpha,
            "beta": self.params.beta.tolist(),
            "gamma": self.params.gamma.tolist(),
            "sigma2": self.params.sigma2,
            "alpha_w": self.covariates.alpha_w.tolist(),
            "beta_w": self.covariates.beta_w.ravel().tolist(),
            "sigma_w": self.covariates.sigma_w.ravel().tolist(),
            "x_design": x_design,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "") -> "DgpConfig":
        """Build a config from the JSON field layout; matrices are row-major."""

        def get(name, default=None):
            if name in d:
                return d[name]
            if default is not None:
                return default
            raise ConfigurationError("missing required field", field=prefix + name)

        def matrix(name, shape, default=None):
            raw = get(name, default)
            try:
                arr = np.asarray(raw, dtype=float)
                return arr.reshape(shape)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"cannot read as {shape[0]}x{shape[1]} matrix ({exc})",
                                         field=prefix + name) from None

        if not isinstance(d, dict):
            raise ConfigurationError("must be a JSON object", field=prefix.rstrip(".") or "$")
        for key in d:
            if key not in _DGP_FIELDS:
                raise ConfigurationError(f"unknown field; expected one of {', '.join(_DGP_FIELDS)}",
                                         field=prefix + str(key))
        try:
            n, m, k = (int(get(name)) for name in ("n", "m", "k"))
        except (TypeError, ValueError):
            raise ConfigurationError("n, m, k must be integers", field=prefix + "n") from None
        x_design = get("x_design", "gaussian")
        if not isinstance(x_design, str):
            x_design = matrix("x_design", (n, m))
        try:
            return cls(
                n=n,
                m=m,
                k=k,
                params=ModelParams(
                    alpha=get("alpha", 0.0),
                    beta=matrix("beta", (m, 1), [0.0] * m).ravel(),
                    gamma=matrix("gamma", (k, 1), [0.0] * k).ravel(),
                    sigma2=get("sigma2", 1.0),
                ),
                covariates=CovariateModel(
                    alpha_w=matrix("alpha_w", (k, 1), [0.0] * k).ravel(),
                    beta_w=matrix("beta_w", (m, k), [0.0] * (m * k)),
                    sigma_w=matrix("sigma_w", (k, k), np.eye(k).ravel().tolist()),
                ),
                x_design=x_design,
                seed=int(get("seed", 0)),
            )
        except ConfigurationError as exc:
            if prefix and exc.field and not exc.field.startswith(prefix):
                raise ConfigurationError(exc.message, field=prefix + exc.field) from None
            raise

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DgpConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "DgpConfig":
        return cls.from_json(Path(path).read_text())


_DGP_FIELDS = ("n", "m", "k", "alpha", "beta", "gamma", "sigma2", "alpha_w", "beta_w", "sigma_w",
               "x_design", "seed")


def check_spd(matrix: np.ndarray, name: str = "matrix", rtol: float = 1e-12) -> np.ndarray:
    """Validate symmetry (relative ``rtol``) and positive definiteness."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"must be square, got shape {a.shape}", field=name)
    if not np.all(np.isfinite(a)):
        raise ConfigurationError("entries must be finite", field=name)
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > rtol * scale:
        raise ConfigurationError("must be symmetric", field=name)
    cholesky_sqrt(a, name=name)
    return a


def cholesky_sqrt(sigma_w: np.ndarray, name: str = "sigma_w") -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == sigma_w``.

    Raises
    ------
    ConfigurationError
        If ``sigma_w`` is not positive definite; the message names the
        first leading principal minor that fails.
    """
    a = np.asarray(sigma_w, dtype=float)
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise ConfigurationError(
            f"not positive definite: leading minor of order {info} is not positive", field=name
        )
    if info < 0:
        raise ConfigurationError(f"invalid argument to Cholesky factorization ({info})", field=name)
    return c


def _draw(config: DgpConfig, chol: np.ndarray, replication_index: int) -> tuple[np.ndarray, np.ndarray]:
    n, k = config.n, config.k
    rng = _rng.substream(config.seed, _rng.REPLICATION, replication_index)
    z = rng.standard_normal((n, k))
    u = rng.standard_normal(n)
    x = config.x
    cov = config.covariates
    p = config.params
    w = cov.alpha_w[None, :] + x @ cov.beta_w + z @ chol.T
    y = p.alpha + x @ p.beta + w @ p.gamma + np.sqrt(p.sigma2) * u
    return y, w


def simulate(config: DgpConfig, replication_index: int) -> RegressionData:
    """Draw replication ``replication_index`` of ``config``.

    The draw depends only on ``(config.seed, replication_index)``.
    """
    chol = cholesky_sqrt(config.covariates.sigma_w)
    y, w = _draw(config, chol, replication_index)
    return RegressionData(y, config.x, w)


def simulate_batch(config: DgpConfig, indices) -> tuple[np.ndarray, np.ndarray]:
    """Stack replications ``indices`` as ``y`` (B, n) and ``w`` (B, n, k).

    Row ``b`` is bit-identical to ``simulate(config, indices[b])``.
    """
    chol = cholesky_sqrt(config.covariates.sigma_w)
    indices = list(indices)
    ys = np.empty((len(indices), config.n))
    ws = np.empty((len(indices), config.n, config.k))
    for b, r in enumerate(indices):
        ys[b], ws[b] = _draw(config, chol, r)
    return ys, ws


def make_config(
    n: int,
    m: int,
    k: int,
    *,
    alpha: float = 0.0,
    beta=None,
    gamma=None,
    sigma2: float = 1.0,
    alpha_w=None,
    beta_w=None,
    sigma_w=None,
    x_design: XDesign = "gaussian",
    seed: int = 0,
) -> DgpConfig:
    """Convenience constructor with zero/identity defaults."""
    return DgpConfig(
        n=n,
        m=m,
        k=k,
        params=ModelParams(
            alpha=alpha,
            beta=np.zeros(m) if beta is None else beta,
            gamma=np.zeros(k) if gamma is None else gamma,
            sigma2=sigma2,
        ),
        covariates=CovariateModel(
            alpha_w=np.zeros(k) if alpha_w is None else alpha_w,
            beta_w=np.zeros((m, k)) if beta_w is None else np.reshape(beta_w, (m, k)),
            sigma_w=np.eye(k) if sigma_w is None else sigma_w,
        ),
        x_design=x_design,
        seed=seed,
    )
