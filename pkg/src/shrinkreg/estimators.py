"""Two-step estimators of the treatment effect.

Every rule here has the same shape: estimate the control coefficients with a
first-stage rule ``gamma_hat`` that only sees the data projected off the
intercept and the treatment, then regress ``Y - W gamma_hat`` on ``X``::

    beta_hat = (X'hX)^-1 X'h (Y - W gamma_hat),      h = I - 11'/n

The first stages are

==========  ===============================================================
ols-long    ``gamma_ols``
ols-short   ``0``
shrink      ``(1 - p SSR / ||gamma_ols||_M^2) gamma_ols``
shrink-pp   positive part of the above
eb          ``shrink`` at ``p = (k - 2) / (n - m - k - 1)``
gbayes      ``(W_perp'W_perp + sigma2/tau2 Sigma_W)^-1 W_perp'Y_perp``
==========  ===============================================================

with ``M = W'h(I - X(X'hX)^-1 X')hW`` and ``SSR`` the long-regression sum of
squared residuals. Under exogenous treatment every rule in this family is
unbiased for ``beta`` given ``X``.

The batched kernels (:func:`fit_arrays`, :func:`first_stage`) broadcast over
leading axes and are what the Monte Carlo harness calls; the dataset-level
functions add validation, warnings and diagnostics on top.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import canon
from .exceptions import ConditioningWarning, DimensionError, DominanceWarning
from .model import RegressionData, check_spd

KINDS = ("ols-long", "ols-short", "shrink", "shrink-pp", "eb", "gbayes")
SHRINK_KINDS = ("shrink", "shrink-pp", "eb")
DEGENERATE_RTOL = 1e-14


def p_upper_bound(n: int, m: int, k: int) -> float:
    """Right end of the open interval of shrinkage weights with guaranteed dominance."""
    denom = n - m - k + 2
    return 2.0 * (k - 2) / denom if denom > 0 else math.nan


def p_empirical_bayes(n: int, m: int, k: int) -> float:
    """``(k - 2) / (s - k)`` with ``s = n - m - 1``; NaN when ``s <= k``."""
    denom = n - m - k - 1
    return (k - 2) / denom if denom > 0 else math.nan


def p_james_stein(n: int, m: int, k: int) -> float:
    """Classical James-Stein weight ``(k - 2) / (n - m - k + 1)`` for unknown variance."""
    denom = n - m - k + 1
    return (k - 2) / denom if denom > 0 else math.nan


@dataclass(frozen=True, eq=False)
class EstimatorSpec:
    """Which rule to apply and its hyperparameters.

    ``p=None`` for ``shrink``/``shrink-pp`` means the empirical-Bayes weight.
    For ``gbayes``, ``sigma2`` and ``sigma_w`` may be left ``None`` when the
    caller supplies the true values (the simulation harness does).
    """

    kind: str
    p: float | None = None
    tau2: float | None = None
    sigma2: float | None = None
    sigma_w: np.ndarray | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        if self.p is not None:
            if self.kind not in ("shrink", "shrink-pp"):
                raise ValueError(f"p only applies to shrink and shrink-pp, not {self.kind}")
            if not np.isfinite(self.p) or self.p < 0:
                raise ValueError(f"p must be a non-negative finite number, got {self.p}")
            object.__setattr__(self, "p", float(self.p))
        if self.kind == "gbayes":
            if self.tau2 is None or not self.tau2 > 0:
                raise ValueError("gbayes requires tau2 > 0")
            if self.sigma2 is not None and not self.sigma2 >= 0:
                raise ValueError("gbayes requires sigma2 >= 0")
            if self.sigma_w is not None:
                object.__setattr__(self, "sigma_w", check_spd(self.sigma_w, name="sigma_w"))

    @property
    def label(self) -> str:
        return self.name or self.kind

    @property
    def consumes(self) -> tuple[str, ...]:
        """Population quantities the rule needs beyond the data."""
        return ("sigma2", "sigma_w") if self.kind == "gbayes" else ()

    def resolve_p(self, n: int, m: int, k: int) -> float:
        if self.kind == "eb" or self.p is None:
            p = p_empirical_bayes(n, m, k)
            if not np.isfinite(p):
                raise ValueError(
                    f"empirical-Bayes weight needs n - m - k - 1 >= 1, got n={n}, m={m}, k={k}")
            return p
        return self.p

    def with_truth(self, sigma2: float, sigma_w: np.ndarray) -> "EstimatorSpec":
        """Fill unspecified ``gbayes`` variances with the supplied values."""
        if self.kind != "gbayes":
            return self
        return EstimatorSpec(
            self.kind,
            tau2=self.tau2,
            sigma2=sigma2 if self.sigma2 is None else self.sigma2,
            sigma_w=sigma_w if self.sigma_w is None else self.sigma_w,
            name=self.name,
        )

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        for key in ("p", "tau2", "sigma2", "name"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.sigma_w is not None:
            d["sigma_w"] = np.asarray(self.sigma_w).ravel().tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSpec":
        if isinstance(d, str):
            return cls(d)
        extra = set(d) - {"kind", "p", "tau2", "sigma2", "sigma_w", "name"}
        if extra:
            raise ValueError(f"unknown field(s) {sorted(extra)}")
        sigma_w = d.get("sigma_w")
        if sigma_w is not None:
            sigma_w = np.asarray(sigma_w, dtype=float)
            side = int(round(math.sqrt(sigma_w.size)))
            sigma_w = sigma_w.reshape(side, side)
        return cls(
            kind=d["kind"],
            p=d.get("p"),
            tau2=d.get("tau2"),
            sigma2=d.get("sigma2"),
            sigma_w=sigma_w,
            name=d.get("name"),
        )


@dataclass
class EstimateResult:
    estimator: str
    beta_hat: np.ndarray
    gamma_hat: np.ndarray
    alpha_hat: float
    shrink_factor: float
    ssr: float
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return v if math.isfinite(v) else None

        return {
            "estimator": self.estimator,
            "beta_hat": [num(v) for v in self.beta_hat],
            "gamma_hat": [num(v) for v in self.gamma_hat],
            "alpha_hat": num(self.alpha_hat),
            "shrink_factor": num(self.shrink_factor),
            "ssr": num(self.ssr),
            "p_used": num(self.diagnostics.get("p_used", math.nan)),
            "p_upper_bound": num(self.diagnostics.get("p_upper_bound", math.nan)),
            "warnings": list(self.warnings),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# --------------------------------------------------------------------------
# batched kernels


def _norm2(v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", v, v)


def _solve_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.solve(a, b[..., None])[..., 0]


def least_squares_parts(y_perp: np.ndarray, w_perp: np.ndarray) -> dict[str, np.ndarray]:
    """QR-based least squares of ``y_perp`` on ``w_perp``, batched over leading axes."""
    qw, rw = np.linalg.qr(w_perp)
    coef = np.einsum("...ji,...j->...i", qw, y_perp)
    resid = y_perp - np.einsum("...ij,...j->...i", qw, coef)
    return {
        "rw": rw,
        "coef": coef,
        "gamma_ols": _solve_vec(rw, coef),
        "ssr": _norm2(resid),
        "seminorm": _norm2(coef),
    }


def first_stage(spec: EstimatorSpec, y_perp: np.ndarray, w_perp: np.ndarray,
                p: float | None = None, parts: dict | None = None) -> dict[str, np.ndarray]:
    """Control-coefficient rule applied to data already projected off ``(1, x)``.

    ``y_perp`` has shape ``(..., s)`` and ``w_perp`` ``(..., s, k)``; any
    coordinates are fine as long as inner products are those of the
    projected data (residual n-vectors or ``q_perp'`` coordinates).
    ``parts`` may carry a precomputed :func:`least_squares_parts`.

    Returns a dict with ``gamma_hat``, ``factor``, ``ssr``, ``seminorm``
    (``||gamma_ols||_M^2``), ``gamma_ols`` and ``degenerate``.
    """
    kind = spec.kind
    if kind == "ols-short":
        batch = y_perp.shape[:-1]
        k = w_perp.shape[-1]
        return {
            "gamma_hat": np.zeros(batch + (k,)),
            "factor": np.zeros(batch),
            "ssr": _norm2(y_perp),
            "seminorm": np.full(batch, np.nan),
            "gamma_ols": np.full(batch + (k,), np.nan),
            "degenerate": np.zeros(batch, dtype=bool),
        }
    if parts is None:
        parts = least_squares_parts(y_perp, w_perp)
    rw, coef, gamma_ols = parts["rw"], parts["coef"], parts["gamma_ols"]
    ssr, seminorm = parts["ssr"], parts["seminorm"]
    degenerate = np.zeros(ssr.shape, dtype=bool)
    if kind == "ols-long":
        factor = np.ones(ssr.shape)
        gamma_hat = gamma_ols
    elif kind in SHRINK_KINDS:
        if p is None:
            raise ValueError("shrinkage weight p is required")
        degenerate = ~(seminorm > DEGENERATE_RTOL * ssr)
        factor = np.where(degenerate, 0.0, 1.0 - p * ssr / np.where(degenerate, 1.0, seminorm))
        if kind == "shrink-pp":
            factor = np.maximum(factor, 0.0)
        gamma_hat = factor[..., None] * gamma_ols
    elif kind == "gbayes":
        if spec.sigma2 is None or spec.sigma_w is None:
            raise ValueError("gbayes needs sigma2 and sigma_w")
        gram = np.einsum("...ji,...jk->...ik", rw, rw)
        penalty = (spec.sigma2 / spec.tau2) * np.asarray(spec.sigma_w)
        rhs = np.einsum("...ji,...j->...i", rw, coef)
        gamma_hat = _solve_vec(gram + penalty, rhs)
        fitted = np.einsum("...ij,...j->...i", rw, gamma_hat)
        # effective factor <gamma_hat, gamma_ols>_M / ||gamma_ols||_M^2, in [0, 1]
        safe = np.where(seminorm > 0, seminorm, 1.0)
        factor = np.where(seminorm > 0, np.einsum("...i,...i->...", fitted, coef) / safe, 0.0)
    else:  # pragma: no cover - guarded by EstimatorSpec
        raise ValueError(kind)
    return {
        "gamma_hat": gamma_hat,
        "factor": factor,
        "ssr": ssr,
        "seminorm": seminorm,
        "gamma_ols": gamma_ols,
        "degenerate": degenerate,
    }


def _center(a: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    mean = a.mean(axis=axis, keepdims=True)
    return a - mean, np.squeeze(mean, axis=axis)


def fit_many(specs, y: np.ndarray, x: np.ndarray, w: np.ndarray,
             ps=None) -> list[dict[str, np.ndarray]]:
    """Batched two-step fits of several rules sharing one projection and QR.

    ``y`` is ``(..., n)``, ``x`` ``(n, m)`` or ``(..., n, m)``, ``w``
    ``(..., n, k)``. No rank checks are made; failures show up as non-finite
    entries. ``ps`` gives per-spec weights for the shrinkage kinds (``None``
    entries fall back to :meth:`EstimatorSpec.resolve_p`).
    """
    specs = list(specs)
    n, k = w.shape[-2], w.shape[-1]
    m = x.shape[-1]
    ps = [None] * len(specs) if ps is None else list(ps)
    yc, ybar = _center(y, -1)
    xc, xbar = _center(x, -2)
    wc, wbar = _center(w, -2)
    qx, rx = np.linalg.qr(xc)
    qxt = np.swapaxes(qx, -1, -2)
    qx_yc = np.einsum("...ij,...j->...i", qxt, yc)
    qx_wc = qxt @ wc
    y_perp = yc - np.einsum("...ij,...j->...i", qx, qx_yc)
    w_perp = wc - qx @ qx_wc
    parts = None
    fits = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for spec, p in zip(specs, ps):
            if p is None and spec.kind in SHRINK_KINDS:
                p = spec.resolve_p(n, m, k)
            if parts is None and spec.kind != "ols-short":
                parts = least_squares_parts(y_perp, w_perp)
            stage = first_stage(spec, y_perp, w_perp, p=p, parts=parts)
            gamma_hat = stage["gamma_hat"]
            # qx' h (y - w gamma_hat)
            rhs = qx_yc - np.einsum("...ij,...j->...i", qx_wc, gamma_hat)
            beta_hat = _solve_vec(rx, rhs)
            alpha_hat = (ybar - np.einsum("...j,...j->...", xbar, beta_hat)
                         - np.einsum("...j,...j->...", wbar, gamma_hat))
            stage.update(beta_hat=beta_hat, alpha_hat=alpha_hat, p=p)
            fits.append(stage)
    return fits


def fit_arrays(spec: EstimatorSpec, y: np.ndarray, x: np.ndarray, w: np.ndarray,
               p: float | None = None) -> dict[str, np.ndarray]:
    """Single-rule version of :func:`fit_many`."""
    return fit_many([spec], y, x, w, [p])[0]


# --------------------------------------------------------------------------
# dataset-level API


def _as_data(data) -> RegressionData:
    if isinstance(data, RegressionData):
        return data
    return RegressionData(*data)


def _validate(data: RegressionData, needs_w: bool) -> float:
    if not (np.all(np.isfinite(data.y)) and np.all(np.isfinite(data.x)) and np.all(np.isfinite(data.w))):
        raise ValueError("data contain non-finite entries")
    if needs_w:
        cond = canon.check_full_rank(data.x, data.w)
    else:
        cond = canon.check_full_rank(data.x, np.zeros((data.n, 0)))
    canon.warn_if_ill_conditioned(cond, "design [1 | x | w]" if needs_w else "design [1 | x]")
    return cond


def _dominance_messages(kind: str, p: float, n: int, m: int, k: int) -> list[str]:
    msgs = []
    if k < 3:
        msgs.append(f"k = {k} < 3: shrinkage has no dominance guarantee")
    if n < m + k + 2:
        msgs.append(f"n = {n} < m + k + 2 = {m + k + 2}: shrinkage has no dominance guarantee")
    bound = p_upper_bound(n, m, k)
    if k >= 3 and p > 0 and not p < bound:
        what = "default p" if kind == "eb" else "p"
        msgs.append(f"{what} outside dominance interval: p = {p:.6g} >= 2(k-2)/(n-m-k+2) = {bound:.6g}")
    return msgs


def estimate(data, spec: EstimatorSpec | str) -> EstimateResult:
    """Fit ``spec`` to one dataset."""
    if isinstance(spec, str):
        spec = EstimatorSpec(spec)
    data = _as_data(data)
    n, m, k = data.n, data.m, data.k
    needs_w = spec.kind != "ols-short"
    cond = _validate(data, needs_w)
    messages: list[str] = []
    p = None
    if spec.kind in SHRINK_KINDS:
        if spec.kind == "eb" and not n - m - 1 > k:
            raise ValueError(f"empirical Bayes needs s = n - m - 1 > k, got s = {n - m - 1}, k = {k}")
        p = spec.resolve_p(n, m, k)
        messages = _dominance_messages(spec.kind, p, n, m, k)
    if spec.kind == "gbayes" and (spec.sigma2 is None or spec.sigma_w is None):
        raise ValueError("gbayes needs sigma2 and sigma_w")
    if spec.kind == "gbayes" and np.shape(spec.sigma_w) != (k, k):
        raise DimensionError(f"sigma_w must be {k}x{k}")
    fit = fit_arrays(spec, data.y, data.x, data.w, p=p)
    if bool(fit["degenerate"]):
        messages.append("degenerate seminorm denominator: controls fully shrunk")
    for msg in messages:
        warnings.warn(msg, DominanceWarning, stacklevel=2)
    return EstimateResult(
        estimator=spec.label,
        beta_hat=fit["beta_hat"],
        gamma_hat=fit["gamma_hat"],
        alpha_hat=float(fit["alpha_hat"]),
        shrink_factor=float(fit["factor"]),
        ssr=float(fit["ssr"]),
        diagnostics={
            "seminorm_value": float(fit["seminorm"]),
            "p_used": math.nan if p is None else p,
            "p_upper_bound": p_upper_bound(n, m, k),
            "p_james_stein": p_james_stein(n, m, k),
            "p_empirical_bayes": p_empirical_bayes(n, m, k),
            "degenerate_denominator": bool(fit["degenerate"]),
            "condition_number": cond,
            "gamma_ols": fit["gamma_ols"],
        },
        warnings=messages,
    )


def ols_long(data) -> EstimateResult:
    """Least squares of ``Y`` on ``(1, X, W)``."""
    return estimate(data, EstimatorSpec("ols-long"))


def ols_short(data) -> EstimateResult:
    """Least squares of ``Y`` on ``(1, X)``, ignoring the controls."""
    return estimate(data, EstimatorSpec("ols-short"))


def shrink_gamma(data, p: float | None = None, positive_part: bool = False) -> EstimateResult:
    """Partial James-Stein shrinkage of the control coefficients.

    Parameters
    ----------
    data : RegressionData or (y, x, w)
    p : float, optional
        Shrinkage weight; defaults to the empirical-Bayes value
        ``(k - 2) / (n - m - k - 1)``. Dominance over least squares is
        guaranteed for ``0 < p < 2(k - 2) / (n - m - k + 2)`` when ``k >= 3``
        and ``n >= m + k + 2``; weights outside that range are still
        computed but emit a :class:`DominanceWarning`.
    positive_part : bool
        Clip the shrink factor at zero.
    """
    return estimate(data, EstimatorSpec("shrink-pp" if positive_part else "shrink", p=p))


def seminorm_gamma(data, gamma: np.ndarray) -> float:
    """``gamma' W'h(I - X(X'hX)^-1 X')hW gamma``, i.e. ``||q_perp' W gamma||^2``."""
    data = _as_data(data)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (data.k,):
        raise DimensionError(f"gamma must have shape ({data.k},)")
    canon.check_full_rank(data.x, data.w)
    xc = data.x - data.x.mean(axis=0)
    wg = data.w @ gamma
    wg = wg - wg.mean()
    qx, _ = np.linalg.qr(xc)
    r = wg - qx @ (qx.T @ wg)
    return float(r @ r)


def empirical_bayes(data) -> EstimateResult:
    """Shrinkage at the empirical-Bayes weight ``p = (k - 2) / (s - k)``.

    The factor is also recomputed from the canonical coordinates as
    ``1 - (||Y*_r||^2 / (s - k)) / (||Y*_w||^2 / (k - 2))``; the two routes
    must agree.
    """
    data = _as_data(data)
    n, m, k = data.n, data.m, data.k
    s = n - m - 1
    if s <= k:
        raise ValueError(f"empirical Bayes needs s = n - m - 1 > k, got s = {s}, k = {k}")
    result = estimate(data, EstimatorSpec("eb"))
    _, form = canon.canonicalize(data.y, data.x, data.w)
    num = float(form.y_star_r @ form.y_star_r) / (s - k)
    den = float(form.y_star_w @ form.y_star_w) / (k - 2) if k > 2 else math.nan
    canonical = 1.0 - num / den if den > 0 else math.nan
    result.diagnostics["canonical_factor"] = canonical
    if not result.diagnostics["degenerate_denominator"] and np.isfinite(canonical):
        gap = abs(canonical - result.shrink_factor)
        if gap > 1e-8 * max(1.0, abs(num / den)):
            warnings.warn(f"canonical and projected shrink factors differ by {gap:.3g}",
                          ConditioningWarning, stacklevel=2)
    return result


def generalized_bayes(data, sigma2: float, tau2: float, sigma_w: np.ndarray) -> EstimateResult:
    """Posterior mean under a flat prior on ``mu_x`` and ``gamma ~ N(0, tau2 Sigma_W^-1)``.

    ``beta_hat = (qx'x)^-1 (y_x - w_x (w_perp'w_perp + sigma2/tau2 Sigma_W)^-1 w_perp'y_perp)``.
    """
    return estimate(data, EstimatorSpec("gbayes", tau2=tau2, sigma2=sigma2, sigma_w=sigma_w))


def plugin_variances(data) -> tuple[float, np.ndarray]:
    """Data-based stand-ins for ``sigma2`` and ``Sigma_W``.

    ``SSR / (n - 1 - m - k)`` and ``W_perp'W_perp / (n - 1 - m)``, the
    residual-variance estimate and the sample analog of the control
    covariance after projecting off ``(1, x)``.
    """
    data = _as_data(data)
    n, m, k = data.n, data.m, data.k
    if n <= 1 + m + k:
        raise ValueError("plug-in variances need n > 1 + m + k")
    canon.check_full_rank(data.x, data.w)
    xc = data.x - data.x.mean(axis=0)
    wc = data.w - data.w.mean(axis=0)
    qx, _ = np.linalg.qr(xc)
    w_perp = wc - qx @ (qx.T @ wc)
    y_perp = data.y - data.y.mean()
    y_perp = y_perp - qx @ (qx.T @ y_perp)
    ssr = float(least_squares_parts(y_perp, w_perp)["ssr"])
    return ssr / (n - 1 - m - k), w_perp.T @ w_perp / (n - 1 - m)


__all__ = [
    "plugin_variances",
    "KINDS",
    "EstimatorSpec",
    "EstimateResult",
    "estimate",
    "ols_long",
    "ols_short",
    "shrink_gamma",
    "seminorm_gamma",
    "empirical_bayes",
    "generalized_bayes",
    "first_stage",
    "fit_arrays",
    "fit_many",
    "least_squares_parts",
    "p_upper_bound",
    "p_empirical_bayes",
    "p_james_stein",
]
