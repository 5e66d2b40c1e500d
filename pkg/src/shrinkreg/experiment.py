"""Experiment configs, check orchestration and parameter sweeps for the CLI."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import risk
from .estimators import SHRINK_KINDS, EstimatorSpec, p_upper_bound
from .exceptions import ConfigurationError
from .model import DgpConfig, simulate

CHECKS = ("dominance", "unbiasedness", "lemma1", "corollary_equivalence", "decomposition", "invariance")
SE_CHECKS = tuple(c for c in CHECKS if c != "invariance")
SWEEP_AXES = ("gamma_scale", "k", "p")


@dataclass
class ExperimentConfig:
    dgp: DgpConfig
    estimators: list[EstimatorSpec]
    reps: int
    out: str = "out"
    checks: list[str] = field(default_factory=list)
    dominance_z: float = 5.0
    dump_data: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("top level must be a JSON object", field="$")
        known = ("dgp", "estimators", "reps", "out", "checks", "dominance_z", "dump_data")
        for key in d:
            if key not in known:
                raise ConfigurationError(f"unknown field; expected one of {', '.join(known)}", field=str(key))
        if "dgp" not in d:
            raise ConfigurationError("missing required field", field="dgp")
        dgp = DgpConfig.from_dict(d["dgp"], prefix="dgp.")
        raw = d.get("estimators")
        if not isinstance(raw, list) or not raw:
            raise ConfigurationError("must be a non-empty list", field="estimators")
        specs = []
        for i, item in enumerate(raw):
            try:
                specs.append(EstimatorSpec.from_dict(item))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigurationError(str(exc), field=f"estimators[{i}]") from None
        names = [s.label for s in specs]
        for i, nm in enumerate(names):
            if names.index(nm) != i:
                raise ConfigurationError(f"duplicate estimator name {nm!r}", field=f"estimators[{i}].name")
        try:
            reps = int(d.get("reps", 1000))
        except (TypeError, ValueError):
            raise ConfigurationError("must be an integer", field="reps") from None
        checks = d.get("checks", [])
        if not isinstance(checks, list):
            raise ConfigurationError("must be a list", field="checks")
        for i, c in enumerate(checks):
            if c not in CHECKS:
                raise ConfigurationError(f"unknown check {c!r}; expected one of {CHECKS}", field=f"checks[{i}]")
        if reps < 2:
            raise ConfigurationError("must be at least 2", field="reps")
        if reps < 100 and any(c in SE_CHECKS for c in checks):
            raise ConfigurationError("must be at least 100 for standard-error based checks", field="reps")
        return cls(
            dgp=dgp,
            estimators=specs,
            reps=reps,
            out=str(d.get("out", "out")),
            checks=list(checks),
            dominance_z=float(d.get("dominance_z", 5.0)),
            dump_data=int(d.get("dump_data", 0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON ({exc})", field="$") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp.to_dict(),
            "estimators": [s.to_dict() for s in self.estimators],
            "reps": self.reps,
            "out": self.out,
            "checks": list(self.checks),
            "dominance_z": self.dominance_z,
            "dump_data": self.dump_data,
        }


def _skip(name: str, why: str) -> risk.CheckResult:
    res = risk.CheckResult(name, True, f"skipped: {why}")
    res.values["skipped"] = True
    return res


def _dominance(cfg: ExperimentConfig, report: risk.RiskReport) -> list[risk.CheckResult]:
    dgp = cfg.dgp
    n, m, k = dgp.n, dgp.m, dgp.k
    baselines = [s.label for s in cfg.estimators if s.kind == "ols-long"]
    if not baselines:
        return [risk.CheckResult("dominance", False, "needs an ols-long arm as baseline")]
    out = []
    bound = p_upper_bound(n, m, k)
    for s in cfg.estimators:
        if s.kind not in SHRINK_KINDS:
            continue
        name = f"dominance[{s.label} vs {baselines[0]}]"
        p = s.resolve_p(n, m, k)
        if not dgp.covariates.exogenous:
            out.append(_skip(name, "beta_w != 0"))
        elif k < 3 or n < m + k + 2:
            out.append(_skip(name, "needs k >= 3 and n >= m + k + 2"))
        elif not 0 < p < bound:
            out.append(_skip(name, f"p = {p:.6g} outside (0, {bound:.6g})"))
        else:
            out.append(risk.dominance_check(report, s.label, baselines[0], z=cfg.dominance_z))
    if not out:
        out.append(risk.CheckResult("dominance", False, "no shrinkage arm to test"))
    return out


def run_checks(cfg: ExperimentConfig, report: risk.RiskReport, workers=None) -> list[risk.CheckResult]:
    dgp = cfg.dgp
    results: list[risk.CheckResult] = []
    for check in cfg.checks:
        if check == "dominance":
            results += _dominance(cfg, report)
        elif check == "unbiasedness":
            for s in cfg.estimators:
                if dgp.covariates.exogenous:
                    results.append(risk.unbiasedness_check(report, s.label))
                else:
                    results.append(_skip(f"unbiasedness[{s.label}]", "beta_w != 0"))
        elif check == "lemma1":
            for s in cfg.estimators:
                results.append(risk.lemma1_bias_check(dgp, s, cfg.reps, workers=workers))
        elif check == "corollary_equivalence":
            for s in cfg.estimators:
                if dgp.covariates.exogenous:
                    results.append(risk.corollary_prediction_equivalence(dgp, s, cfg.reps, report=report))
                else:
                    results.append(_skip(f"corollary-equivalence[{s.label}]", "beta_w != 0"))
        elif check == "decomposition":
            data = simulate(dgp, 0)
            p = dgp.params
            for s in cfg.estimators:
                results.append(risk.loss_decomposition_check(
                    dgp.x, data.w, s, p.beta, p.gamma, p.sigma2, reps=cfg.reps, seed=dgp.seed,
                    alpha=p.alpha, sigma_w=dgp.covariates.sigma_w))
        elif check == "invariance":
            data = simulate(dgp, 0)
            for s in cfg.estimators:
                s = s.with_truth(dgp.params.sigma2, dgp.covariates.sigma_w)
                results += risk.invariance_checks(data, s, seed=dgp.seed)
    return results


def run_experiment(cfg: ExperimentConfig, workers=None) -> tuple[risk.RiskReport, list[risk.CheckResult]]:
    report = risk.mc_risk(cfg.dgp, cfg.estimators, cfg.reps, workers=workers)
    return report, run_checks(cfg, report, workers=workers)


def report_document(cfg: ExperimentConfig, report: risk.RiskReport, checks) -> dict:
    doc = report.to_dict()
    # the output directory is left out so reruns elsewhere produce identical files
    doc["config"] = {key: v for key, v in cfg.to_dict().items() if key != "out"}
    doc["checks"] = [
        {"name": c.name, "passed": c.passed, "skipped": bool(c.values.get("skipped", False)),
         "detail": c.detail}
        for c in checks
    ]
    return doc


# --------------------------------------------------------------------------
# sweeps


def _resize(vec: np.ndarray, k: int, name: str) -> list[float]:
    if vec.size and not np.all(vec == vec[0]):
        raise ConfigurationError("k sweep needs a constant vector to resize", field=f"dgp.{name}")
    return [float(vec[0]) if vec.size else 0.0] * k


def config_for(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """The experiment at one point of a sweep along ``axis``."""
    d = cfg.dgp.to_dict()
    specs = list(cfg.estimators)
    if axis == "gamma_scale":
        d["gamma"] = (np.asarray(d["gamma"]) * value).tolist()
    elif axis == "k":
        k = int(value)
        if k != value or k < 1:
            raise ConfigurationError(f"k values must be positive integers, got {value}", field="values")
        cov = cfg.dgp.covariates
        sw = cov.sigma_w
        if not np.allclose(sw, sw[0, 0] * np.eye(sw.shape[0]), rtol=0, atol=0):
            raise ConfigurationError("k sweep needs sigma_w proportional to the identity", field="dgp.sigma_w")
        if not cov.exogenous:
            raise ConfigurationError("k sweep needs beta_w = 0", field="dgp.beta_w")
        d.update(
            k=k,
            gamma=_resize(cfg.dgp.params.gamma, k, "gamma"),
            alpha_w=_resize(cov.alpha_w, k, "alpha_w"),
            beta_w=[0.0] * (cfg.dgp.m * k),
            sigma_w=(sw[0, 0] * np.eye(k)).ravel().tolist(),
        )
    elif axis == "p":
        if value < 0:
            raise ConfigurationError(f"p values must be non-negative, got {value}", field="values")
        specs = [EstimatorSpec(s.kind, p=value, name=s.name) if s.kind in ("shrink", "shrink-pp") else s
                 for s in specs]
    else:
        raise ConfigurationError(f"unknown axis {axis!r}; expected one of {SWEEP_AXES}", field="axis")
    dgp = DgpConfig.from_dict(d, prefix="dgp.")
    return ExperimentConfig(dgp, specs, cfg.reps, cfg.out, [], cfg.dominance_z)


def run_sweep(cfg: ExperimentConfig, axis: str, values, workers=None) -> str:
    """Long-format CSV with one row per (value, estimator).

    ``loss_diff_vs_ref`` is the paired loss difference to the first estimator.
    """
    m = cfg.dgp.m
    cols = (["axis", "axis_value", "estimator", "mean_loss", "loss_se"]
            + [f"bias_{j}" for j in range(1, m + 1)] + [f"bias_se_{j}" for j in range(1, m + 1)]
            + ["reps", "loss_diff_vs_ref", "loss_diff_se_vs_ref"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for value in values:
        point = config_for(cfg, axis, value)
        report = risk.mc_risk(point.dgp, point.estimators, point.reps, workers=workers)
        ref = point.estimators[0].label
        for s in point.estimators:
            er = report[s.label]
            if s.label == ref:
                diff, se = 0.0, 0.0
            else:
                pr = report.pair(s.label, ref)
                diff, se = pr.loss_diff_mean, pr.loss_diff_se
            writer.writerow([axis, repr(float(value)), s.label, repr(er.mean_loss), repr(er.loss_se)]
                            + [repr(float(b)) for b in er.bias] + [repr(float(b)) for b in er.bias_se]
                            + [er.reps, repr(diff), repr(se)])
    return buf.getvalue()


def parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigurationError(f"cannot parse {text!r} as a comma-separated list of numbers",
                                 field="values") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise ConfigurationError("need at least one finite value", field="values")
    return values
