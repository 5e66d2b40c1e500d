"""Monte Carlo risk and bias of two-step estimators, with closed-form oracles.

All arms of an experiment see the same replications (common random numbers),
so paired loss differences have far smaller standard errors than the arms
themselves. Replications are processed in fixed-size chunks, possibly on
several threads, and aggregated in replication order with exactly rounded
sums; the numbers reported do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _rng, canon
from .estimators import SHRINK_KINDS, EstimatorSpec, first_stage, fit_arrays, fit_many, p_upper_bound
from .model import DgpConfig, cholesky_sqrt, simulate_batch

CHUNK = 500
MAX_FAILURE_RATE = 0.01


class TooManyFailures(RuntimeError):
    pass


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SHRINKREG_THREADS", "1")))
    except ValueError:
        return 1


def prediction_loss(beta_hat, beta, x) -> np.ndarray | float:
    """``(beta_hat - beta)' X'hX (beta_hat - beta)``; broadcasts over leading axes of ``beta_hat``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    d = np.asarray(beta_hat, dtype=float) - np.asarray(beta, dtype=float)
    if d.shape[-1] != x.shape[1]:
        raise ValueError(f"beta has {d.shape[-1]} entries but x has {x.shape[1]} columns")
    xc = x - x.mean(axis=0)
    weight = xc.T @ xc
    out = np.einsum("...i,ij,...j->...", d, weight, d)
    return float(out) if out.ndim == 0 else out


def mean_se(values) -> tuple[float, float]:
    """Exactly rounded mean and Monte Carlo standard error (sd / sqrt(R))."""
    v = np.asarray(values, dtype=float)
    r = v.shape[0]
    mean = math.fsum(v.tolist()) / r
    if r < 2:
        return mean, math.nan
    var = math.fsum(((v - mean) ** 2).tolist()) / (r - 1)
    return mean, math.sqrt(var / r)


# --------------------------------------------------------------------------
# reports


@dataclass
class EstimatorRisk:
    estimator: str
    mean_loss: float
    loss_se: float
    bias: np.ndarray
    bias_se: np.ndarray
    reps: int


@dataclass
class PairedRisk:
    estimator_a: str
    estimator_b: str
    loss_diff_mean: float
    loss_diff_se: float

    @property
    def z(self) -> float:
        if self.loss_diff_se > 0:
            return self.loss_diff_mean / self.loss_diff_se
        return 0.0 if self.loss_diff_mean == 0 else math.copysign(math.inf, self.loss_diff_mean)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class RiskReport:
    estimators: dict[str, EstimatorRisk]
    pairs: list[PairedRisk]
    reps: int
    failures: int = 0
    warnings: list[str] = field(default_factory=list)
    losses: dict[str, np.ndarray] | None = field(default=None, repr=False)
    deviations: dict[str, np.ndarray] | None = field(default=None, repr=False)

    def __getitem__(self, name: str) -> EstimatorRisk:
        return self.estimators[name]

    def pair(self, a: str, b: str) -> PairedRisk:
        for pr in self.pairs:
            if (pr.estimator_a, pr.estimator_b) == (a, b):
                return pr
            if (pr.estimator_a, pr.estimator_b) == (b, a):
                return PairedRisk(a, b, -pr.loss_diff_mean, pr.loss_diff_se)
        raise KeyError((a, b))

    @property
    def m(self) -> int:
        return len(next(iter(self.estimators.values())).bias)

    def csv_columns(self) -> list[str]:
        m = self.m
        return (["estimator", "mean_loss", "loss_se"]
                + [f"bias_{j}" for j in range(1, m + 1)]
                + [f"bias_se_{j}" for j in range(1, m + 1)]
                + ["reps", "estimator_a", "estimator_b", "loss_diff_mean", "loss_diff_se"])

    def to_csv(self) -> str:
        """One row per estimator followed by one row per pair; unused cells are empty."""
        cols = self.csv_columns()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for er in self.estimators.values():
            row = {"estimator": er.estimator, "mean_loss": _fmt(er.mean_loss),
                   "loss_se": _fmt(er.loss_se), "reps": _fmt(er.reps)}
            for j, (b, se) in enumerate(zip(er.bias, er.bias_se), start=1):
                row[f"bias_{j}"] = _fmt(b)
                row[f"bias_se_{j}"] = _fmt(se)
            writer.writerow(row)
        for pr in self.pairs:
            writer.writerow({"estimator_a": pr.estimator_a, "estimator_b": pr.estimator_b,
                             "loss_diff_mean": _fmt(pr.loss_diff_mean),
                             "loss_diff_se": _fmt(pr.loss_diff_se)})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "failures": self.failures,
            "warnings": list(self.warnings),
            "estimators": [
                {"estimator": er.estimator, "mean_loss": _num(er.mean_loss), "loss_se": _num(er.loss_se),
                 "bias": [_num(b) for b in er.bias], "bias_se": [_num(b) for b in er.bias_se],
                 "reps": er.reps}
                for er in self.estimators.values()
            ],
            "pairs": [
                {"estimator_a": pr.estimator_a, "estimator_b": pr.estimator_b,
                 "loss_diff_mean": _num(pr.loss_diff_mean), "loss_diff_se": _num(pr.loss_diff_se)}
                for pr in self.pairs
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# --------------------------------------------------------------------------
# Monte Carlo


def _resolve(config: DgpConfig, specs) -> tuple[list[EstimatorSpec], list, list[str]]:
    specs = [EstimatorSpec(s) if isinstance(s, str) else s for s in specs]
    names = [s.label for s in specs]
    if len(set(names)) != len(names):
        raise ValueError(f"estimator names must be unique, got {names}")
    n, m, k = config.n, config.m, config.k
    resolved, ps, notes = [], [], []
    bound = p_upper_bound(n, m, k)
    for s in specs:
        s = s.with_truth(config.params.sigma2, config.covariates.sigma_w)
        p = s.resolve_p(n, m, k) if s.kind in SHRINK_KINDS else None
        if p is not None and k >= 3 and p > 0 and not p < bound:
            what = "default p" if (s.kind == "eb" or s.p is None) else "p"
            notes.append(f"{s.label}: {what} outside dominance interval "
                         f"(p = {p:.6g}, 2(k-2)/(n-m-k+2) = {bound:.6g})")
        resolved.append(s)
        ps.append(p)
    return resolved, ps, notes


def _run_chunk(config: DgpConfig, specs, ps, lo: int, hi: int):
    ys, ws = simulate_batch(config, range(lo, hi))
    beta = config.params.beta
    try:
        fits = fit_many(specs, ys, config.x, ws, ps)
        betas = [f["beta_hat"] for f in fits]
    except np.linalg.LinAlgError:
        # isolate the failing replications
        betas = [np.empty((hi - lo, config.m)) for _ in specs]
        for b in range(hi - lo):
            try:
                single = fit_many(specs, ys[b], config.x, ws[b], ps)
                for out, f in zip(betas, single):
                    out[b] = f["beta_hat"]
            except np.linalg.LinAlgError:
                for out in betas:
                    out[b] = np.nan
    devs = [bh - beta for bh in betas]
    losses = [prediction_loss(bh, beta, config.x) for bh in betas]
    return devs, losses


def mc_risk(config: DgpConfig, specs, reps: int, workers: int | None = None,
            keep_draws: bool = False, chunk: int = CHUNK) -> RiskReport:
    """Monte Carlo prediction-norm risk and bias of ``specs`` under ``config``.

    Every replication feeds every estimator. Replications on which any
    estimator fails are dropped from all arms; more than 1% failures raise
    :class:`TooManyFailures`.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    specs, ps, notes = _resolve(config, specs)
    workers = default_workers() if workers is None else max(1, int(workers))
    bounds = [(lo, min(lo + chunk, reps)) for lo in range(0, reps, chunk)]
    run = lambda b: _run_chunk(config, specs, ps, *b)  # noqa: E731
    if workers == 1:
        results = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, bounds))
    names = [s.label for s in specs]
    devs = {nm: np.concatenate([r[0][i] for r in results]) for i, nm in enumerate(names)}
    losses = {nm: np.concatenate([r[1][i] for r in results]) for i, nm in enumerate(names)}
    ok = np.ones(reps, dtype=bool)
    for nm in names:
        ok &= np.all(np.isfinite(devs[nm]), axis=1) & np.isfinite(losses[nm])
    failures = int(reps - ok.sum())
    if failures > MAX_FAILURE_RATE * reps:
        raise TooManyFailures(f"{failures} of {reps} replications failed")
    if failures:
        notes.append(f"{failures} replications excluded after estimator failure")
    kept = int(ok.sum())
    per = {}
    for nm in names:
        d, l = devs[nm][ok], losses[nm][ok]
        mean, se = mean_se(l)
        bias = np.empty(config.m)
        bias_se = np.empty(config.m)
        for j in range(config.m):
            bias[j], bias_se[j] = mean_se(d[:, j])
        per[nm] = EstimatorRisk(nm, mean, se, bias, bias_se, kept)
    pairs = []
    for a, b in itertools.combinations(names, 2):
        mean, se = mean_se(losses[a][ok] - losses[b][ok])
        pairs.append(PairedRisk(a, b, mean, se))
    report = RiskReport(per, pairs, kept, failures, notes)
    if keep_draws:
        report.losses = {nm: losses[nm][ok] for nm in names}
        report.deviations = {nm: devs[nm][ok] for nm in names}
    return report


# --------------------------------------------------------------------------
# closed-form oracles


@dataclass
class RiskOracle:
    phi: np.ndarray
    closed_form_values: dict[str, float]


def _qx(x: np.ndarray) -> np.ndarray:
    xc = x - x.mean(axis=0)
    q, _ = np.linalg.qr(xc)
    return q


def risk_ols_long(n: int, m: int, k: int, sigma2: float) -> float:
    """Risk of long-regression least squares under exogenous treatment."""
    dof = n - m - k - 2
    if dof <= 0:
        return math.inf
    return m * sigma2 * (1 + k / dof)


def risk_ols_short(m: int, sigma2: float, gamma, sigma_w) -> float:
    """Risk of the short regression under exogenous treatment."""
    gamma = np.asarray(gamma, dtype=float)
    return m * sigma2 + m * float(gamma @ np.asarray(sigma_w) @ gamma)


def risk_oracle(config: DgpConfig) -> RiskOracle:
    """Closed forms from the reduction to a first-stage prediction problem.

    ``phi = beta_w' x'qx qx'x beta_w + m Sigma_W`` weights the first-stage
    error. The least-squares first stage uses the inverse-Wishart mean
    ``E[(W'W)^-1] = Sigma_W^-1 / (N - k - 1)`` with ``N = n - 1 - m``.
    """
    n, m, k = config.n, config.m, config.k
    sigma2 = config.params.sigma2
    gamma = config.params.gamma
    cov = config.covariates
    qx = _qx(config.x)
    mu_w = qx.T @ config.x @ cov.beta_w
    phi = mu_w.T @ mu_w + m * cov.sigma_w
    dof = n - 1 - m - k - 1
    long_ = m * sigma2 + (sigma2 * float(np.trace(np.linalg.solve(cov.sigma_w, phi))) / dof
                          if dof > 0 else math.inf)
    values = {
        "ols-long": long_,
        "ols-short": m * sigma2 + float(gamma @ phi @ gamma),
    }
    for j, b in enumerate(cov.beta_w @ gamma, start=1):
        values[f"ols-short.bias_{j}"] = float(b)
        values[f"ols-long.bias_{j}"] = 0.0
    return RiskOracle(phi, values)


# --------------------------------------------------------------------------
# checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "SKIP" if self.values.get("skipped") else ("PASS" if self.passed else "FAIL")
        return f"[{tag}] {self.name}: {self.detail}"


def _within(diff: float, se: float, z: float, scale: float = 1.0) -> bool:
    # the absolute slack only matters when the MC error vanishes (noiseless designs)
    return abs(diff) <= z * se + 1e-12 * scale


def dominance_check(report: RiskReport, challenger: str, baseline: str = "ols-long",
                    z: float = 5.0) -> CheckResult:
    pr = report.pair(challenger, baseline)
    passed = pr.loss_diff_mean < 0 and abs(pr.z) >= z
    return CheckResult(
        f"dominance[{challenger} vs {baseline}]", passed,
        f"loss diff {pr.loss_diff_mean:.6g} (SE {pr.loss_diff_se:.3g}, z = {pr.z:.2f}, need < 0 and |z| >= {z:g})",
        {"diff": pr.loss_diff_mean, "se": pr.loss_diff_se, "z": pr.z},
    )


def unbiasedness_check(report: RiskReport, name: str, z: float = 4.0) -> CheckResult:
    er = report[name]
    scale = float(np.max(np.abs(er.bias), initial=0.0))
    ok = all(_within(b, se, z, scale=1.0) for b, se in zip(er.bias, er.bias_se))
    zs = [b / se if se > 0 else 0.0 for b, se in zip(er.bias, er.bias_se)]
    return CheckResult(
        f"unbiasedness[{name}]", ok,
        f"bias {np.array2string(er.bias, precision=4)} with |z| max {max(abs(v) for v in zs):.2f} (need <= {z:g})",
        {"bias": er.bias.tolist(), "bias_se": er.bias_se.tolist(), "scale": scale},
    )


def oracle_check(report: RiskReport, name: str, expected: float, z: float = 3.0) -> CheckResult:
    er = report[name]
    diff = er.mean_loss - expected
    ok = _within(diff, er.loss_se, z, scale=max(abs(expected), 1.0))
    return CheckResult(
        f"risk-oracle[{name}]", ok,
        f"MC {er.mean_loss:.6g} (SE {er.loss_se:.3g}) vs closed form {expected:.6g}",
        {"mc": er.mean_loss, "se": er.loss_se, "expected": expected},
    )


def _tilde_draws(config: DgpConfig, reps: int, extra: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Training samples of the first-stage prediction problem (plus ``extra`` test rows).

    ``W~_i ~ N(0, Sigma_W)`` and ``Y~_i = W~_i' gamma + sigma U_i`` with
    ``N = n - 1 - m`` training rows; drawn from the auxiliary substreams.
    """
    n_train = config.n - 1 - config.m
    rows = n_train + extra
    chol = cholesky_sqrt(config.covariates.sigma_w)
    gamma = config.params.gamma
    sigma = math.sqrt(config.params.sigma2)
    ys = np.empty((reps, rows))
    ws = np.empty((reps, rows, config.k))
    for r in range(reps):
        rng = _rng.substream(config.seed, _rng.AUXILIARY, r)
        w = rng.standard_normal((rows, config.k)) @ chol.T
        ws[r] = w
        ys[r] = w @ gamma + sigma * rng.standard_normal(rows)
    return ys, ws


def _first_stage_gamma(config: DgpConfig, spec: EstimatorSpec, y, w) -> np.ndarray:
    spec = spec.with_truth(config.params.sigma2, config.covariates.sigma_w)
    p = spec.resolve_p(config.n, config.m, config.k) if spec.kind in SHRINK_KINDS else None
    with np.errstate(divide="ignore", invalid="ignore"):
        return first_stage(spec, y, w, p=p)["gamma_hat"]


def lemma1_bias_check(config: DgpConfig, spec: EstimatorSpec | str = "ols-short", reps: int = 10_000,
                      z: float = 4.0, workers: int | None = None) -> CheckResult:
    """Compare the MC bias of ``spec`` with ``-beta_w (E~[gamma_hat] - gamma)``.

    The first-stage mean is exact for the short (``0``) and long
    (``gamma``) regressions; otherwise it is estimated on independent draws
    of the first-stage problem and its MC error is added in quadrature.
    """
    spec = EstimatorSpec(spec) if isinstance(spec, str) else spec
    report = mc_risk(config, [spec], reps, workers=workers)
    er = report[spec.label]
    beta_w = config.covariates.beta_w
    gamma = config.params.gamma
    if spec.kind == "ols-short":
        expected, expected_se = beta_w @ gamma, np.zeros(config.m)
    elif spec.kind == "ols-long":
        expected, expected_se = np.zeros(config.m), np.zeros(config.m)
    else:
        ys, ws = _tilde_draws(config, reps)
        g = _first_stage_gamma(config, spec, ys, ws)
        contrib = -(g - gamma) @ beta_w.T
        stats = [mean_se(contrib[:, j]) for j in range(config.m)]
        expected = np.array([s[0] for s in stats])
        expected_se = np.array([s[1] for s in stats])
    se = np.sqrt(er.bias_se ** 2 + expected_se ** 2)
    scale = max(1.0, float(np.max(np.abs(expected), initial=0.0)))
    ok = all(_within(b - e, s, z, scale=scale) for b, e, s in zip(er.bias, expected, se))
    return CheckResult(
        f"lemma1-bias[{spec.label}]", ok,
        f"MC bias {np.array2string(er.bias, precision=4)} vs closed form "
        f"{np.array2string(np.asarray(expected), precision=4)} (SE {np.array2string(se, precision=3)})",
        {"bias": er.bias.tolist(), "expected": np.asarray(expected).tolist(), "se": se.tolist()},
    )


def corollary_prediction_equivalence(config: DgpConfig, spec: EstimatorSpec | str, reps: int = 10_000,
                                     z: float = 4.0, workers: int | None = None,
                                     report: RiskReport | None = None) -> CheckResult:
    """Regression risk versus ``m`` times the out-of-sample error of the first stage.

    The first-stage rule is trained on ``n - 1 - m`` draws of the prediction
    problem and scored on one further draw; both sides are estimated
    independently.
    """
    if not config.covariates.exogenous:
        raise ValueError("the prediction-error equivalence requires beta_w = 0")
    spec = EstimatorSpec(spec) if isinstance(spec, str) else spec
    if report is None or spec.label not in report.estimators:
        report = mc_risk(config, [spec], reps, workers=workers)
    er = report[spec.label]
    ys, ws = _tilde_draws(config, reps, extra=1)
    g = _first_stage_gamma(config, spec, ys[:, 1:], ws[:, 1:])
    err = (ys[:, 0] - np.einsum("ri,ri->r", ws[:, 0], g)) ** 2
    pm, pse = mean_se(config.m * err)
    se = math.hypot(er.loss_se, pse)
    diff = er.mean_loss - pm
    ok = _within(diff, se, z, scale=max(1.0, abs(pm)))
    return CheckResult(
        f"corollary-equivalence[{spec.label}]", ok,
        f"regression risk {er.mean_loss:.6g} (SE {er.loss_se:.3g}) vs m x prediction error "
        f"{pm:.6g} (SE {pse:.3g})",
        {"risk": er.mean_loss, "risk_se": er.loss_se, "prediction": pm, "prediction_se": pse},
    )


def loss_decomposition_check(x, w, spec: EstimatorSpec | str, beta, gamma, sigma2: float,
                             reps: int = 10_000, seed: int = 0, alpha: float = 0.0,
                             z: float = 4.0, sigma_w=None) -> CheckResult:
    """Conditional on fixed ``(x, w)``: ``E||mu_x_hat - mu_x||^2 = m sigma2 + E||mu_w_hat - mu_w||^2_{a'a}``.

    The left side uses the regression-level estimate of ``beta``; the right
    side uses the first stage in canonical coordinates. Both share the same
    noise draws and are compared through their per-replication difference.
    """
    spec = EstimatorSpec(spec) if isinstance(spec, str) else spec
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    w = np.asarray(w, dtype=float).reshape(len(w), -1)
    n, m = x.shape
    k = w.shape[1]
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    spec = spec.with_truth(sigma2, np.eye(k) if sigma_w is None else sigma_w)
    p = spec.resolve_p(n, m, k) if spec.kind in SHRINK_KINDS else None
    basis = canon.build_basis(x, w)
    qperp = basis.qperp
    mean = alpha + x @ beta + w @ gamma
    sigma = math.sqrt(sigma2)
    ys = np.empty((reps, n))
    for r in range(reps):
        ys[r] = mean + sigma * _rng.substream(seed, _rng.REPLICATION, r).standard_normal(n)
    form = canon.transform(ys[0], basis, x, w)
    a = form.a
    qw_w = basis.qw.T @ w
    mu_w = qw_w @ gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        fit = fit_many([spec], ys, x, w, [p])[0]
        lhs = prediction_loss(fit["beta_hat"], beta, x)
        g = first_stage(spec, ys @ qperp, qperp.T @ w, p=p)["gamma_hat"]
    dev = g @ qw_w.T - mu_w
    rhs = m * sigma2 + np.einsum("ri,ri->r", dev @ a.T, dev @ a.T)
    lm, lse = mean_se(lhs)
    rm, rse = mean_se(rhs)
    dm, dse = mean_se(lhs - rhs)
    ok = _within(dm, dse, z, scale=max(1.0, abs(lm)))
    values = {"lhs": lm, "lhs_se": lse, "rhs": rm, "rhs_se": rse, "diff": dm, "diff_se": dse}
    if spec.kind == "ols-long":
        values["closed_form"] = m * sigma2 + sigma2 * float(np.sum(a * a))
    return CheckResult(
        f"loss-decomposition[{spec.label}]", ok,
        f"E loss {lm:.6g} vs m sigma2 + E seminorm loss {rm:.6g} (paired diff {dm:.3g}, SE {dse:.3g})",
        values,
    )


def invariance_checks(data, spec: EstimatorSpec, seed: int = 0, tol: float = 1e-9,
                      sigma_w=None) -> list[CheckResult]:
    """Deterministic equivariance of ``beta_hat`` on one dataset.

    Rotating the controls (``W -> W R``, with ``Sigma_W -> R' Sigma_W R`` for
    ``gbayes``), shifting ``Y`` by ``1 c0 + X c`` and rescaling ``Y`` (with
    ``sigma2 -> lambda^2 sigma2``) must move ``beta_hat`` accordingly.
    """
    rng = _rng.substream(seed, _rng.AUXILIARY, 2**32)
    y, x, w = data.y, data.x, data.w
    k, m = w.shape[1], x.shape[1]
    if spec.kind == "gbayes":
        spec = spec.with_truth(1.0, np.eye(k) if sigma_w is None else sigma_w)
    base = fit_arrays(spec, y, x, w)["beta_hat"]
    scale = max(1.0, float(np.max(np.abs(base))))
    out = []

    rot = canon.random_orthogonal(rng, k)
    rspec = spec
    if spec.kind == "gbayes":
        rspec = EstimatorSpec("gbayes", tau2=spec.tau2, sigma2=spec.sigma2,
                              sigma_w=rot.T @ spec.sigma_w @ rot, name=spec.name)
    err = float(np.max(np.abs(fit_arrays(rspec, y, x, w @ rot)["beta_hat"] - base)))
    out.append(CheckResult(f"invariance.rotation[{spec.label}]", err <= tol * scale, f"max error {err:.3g}"))

    c0, c = rng.standard_normal(), rng.standard_normal(m)
    shifted = fit_arrays(spec, y + c0 + x @ c, x, w)["beta_hat"]
    err = float(np.max(np.abs(shifted - (base + c))))
    out.append(CheckResult(f"invariance.translation[{spec.label}]", err <= tol * scale,
                           f"max error {err:.3g}"))

    lam = float(np.exp(rng.uniform(-2, 2)))
    sspec = spec
    if spec.kind == "gbayes":
        sspec = EstimatorSpec("gbayes", tau2=spec.tau2 * lam**2, sigma2=spec.sigma2 * lam**2,
                              sigma_w=spec.sigma_w, name=spec.name)
    scaled = fit_arrays(sspec, lam * y, x, w)["beta_hat"]
    err = float(np.max(np.abs(scaled - lam * base)))
    out.append(CheckResult(f"invariance.scale[{spec.label}]", err <= tol * scale * lam, f"max error {err:.3g}"))
    return out


def variance_comparison(report: RiskReport, a: str, b: str) -> PairedRisk:
    """Paired difference of squared deviations ``(beta_a - beta)^2 - (beta_b - beta)^2`` (m = 1)."""
    if report.deviations is None:
        raise ValueError("run mc_risk with keep_draws=True")
    da, db = report.deviations[a], report.deviations[b]
    if da.shape[1] != 1:
        raise ValueError("variance comparison is defined for m = 1")
    mean, se = mean_se(da[:, 0] ** 2 - db[:, 0] ** 2)
    return PairedRisk(a, b, mean, se)
