import json
import math
import warnings

import numpy as np
import pytest

from shrinkreg import risk
from shrinkreg.estimators import EstimatorSpec, p_upper_bound
from shrinkreg.model import make_config, simulate
from shrinkreg.risk import (
    corollary_prediction_equivalence,
    invariance_checks,
    lemma1_bias_check,
    loss_decomposition_check,
    mc_risk,
    mean_se,
    prediction_loss,
    risk_ols_long,
    risk_ols_short,
    risk_oracle,
    variance_comparison,
)


def brute_force_risks(n, m, k, gamma, sigma2, reps, seed, beta_w=None, chunk=100_000):
    """Long and short regression prediction losses from a plain vectorized simulation.

    Uses numpy's default generator and normal-equation solves only, so it
    shares no code with the package.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, m))
    beta_w = np.zeros((m, k)) if beta_w is None else beta_w
    design1 = np.hstack([np.ones((n, 1)), x])
    xc = x - x.mean(0)
    weight = xc.T @ xc
    out_long, out_short = [], []
    for lo in range(0, reps, chunk):
        b = min(chunk, reps - lo)
        w = x @ beta_w + rng.standard_normal((b, n, k))
        y = w @ gamma + math.sqrt(sigma2) * rng.standard_normal((b, n))
        design = np.concatenate([np.broadcast_to(design1, (b, n, 1 + m)), w], axis=2)
        dt = np.swapaxes(design, 1, 2)
        d = np.linalg.solve(dt @ design, dt @ y[..., None])[:, 1:1 + m, 0]
        out_long.append(np.einsum("ri,ij,rj->r", d, weight, d))
        ds = np.linalg.lstsq(design1, y.T, rcond=None)[0].T[:, 1:]
        out_short.append(np.einsum("ri,ij,rj->r", ds, weight, ds))
    return x, np.concatenate(out_long), np.concatenate(out_short)


def _z(values, expected):
    return (values.mean() - expected) / (values.std(ddof=1) / math.sqrt(len(values)))


# --------------------------------------------------------------------------
# prediction loss


def test_prediction_loss_examples():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((10, 1))
    assert prediction_loss(np.array([1.5]), np.array([1.5]), x) == 0.0
    v = float(np.sum((x - x.mean()) ** 2))
    assert abs(prediction_loss(np.array([2.0]), np.array([1.5]), x) - v * 0.25) <= 1e-12 * v


def test_prediction_loss_dense_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, m = 12, 3
        x = rng.standard_normal((n, m))
        bh, b = rng.standard_normal(m), rng.standard_normal(m)
        h = np.eye(n) - np.ones((n, n)) / n
        oracle = (bh - b) @ (x.T @ h @ x) @ (bh - b)
        assert abs(prediction_loss(bh, b, x) - oracle) <= 1e-12 * max(1.0, oracle)
    batch = rng.standard_normal((5, m))
    np.testing.assert_allclose(prediction_loss(batch, b, x),
                               [prediction_loss(r, b, x) for r in batch], rtol=1e-14)
    with pytest.raises(ValueError):
        prediction_loss(np.zeros(2), np.zeros(2), x)


def test_mean_se():
    mean, se = mean_se([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert abs(se - math.sqrt(np.var([1, 2, 3, 4], ddof=1) / 4)) <= 1e-15


# --------------------------------------------------------------------------
# closed forms, validated by brute force


def test_closed_forms_brute_force_small():
    gamma = np.array([1.0, -0.5, 0.5])
    _, long_, short = brute_force_risks(8, 1, 3, gamma, 1.0, 1_000_000, seed=0)
    # the long-regression loss has infinite variance at n - m - k = 4, so its SE is only indicative
    assert abs(_z(long_, risk_ols_long(8, 1, 3, 1.0))) <= 3
    assert abs(_z(short, risk_ols_short(1, 1.0, gamma, np.eye(3)))) <= 3
    assert risk_ols_long(8, 1, 3, 1.0) == 2.5


def test_general_closed_form_with_endogenous_treatment_brute_force():
    n, m, k = 14, 2, 3
    gamma = np.array([0.5, 1.0, -1.0])
    beta_w = np.array([[0.5, 0.0, -0.3], [0.2, 0.4, 0.0]])
    x, long_, short = brute_force_risks(n, m, k, gamma, 1.5, 400_000, seed=1, beta_w=beta_w)
    cfg = make_config(n, m, k, gamma=gamma, sigma2=1.5, beta_w=beta_w, x_design=x)
    oracle = risk_oracle(cfg)
    assert np.all(np.linalg.eigvalsh(oracle.phi) > 0)
    assert abs(_z(long_, oracle.closed_form_values["ols-long"])) <= 3
    assert abs(_z(short, oracle.closed_form_values["ols-short"])) <= 3


def test_oracle_reduces_to_exogenous_forms():
    cfg = make_config(30, 2, 4, gamma=[1, 2, 0, -1], sigma2=2.0, sigma_w=np.diag([1.0, 2.0, 3.0, 4.0]))
    vals = risk_oracle(cfg).closed_form_values
    assert abs(vals["ols-long"] - risk_ols_long(30, 2, 4, 2.0)) <= 1e-12
    assert abs(vals["ols-short"] - risk_ols_short(2, 2.0, cfg.params.gamma, cfg.covariates.sigma_w)) <= 1e-12


# --------------------------------------------------------------------------
# mc_risk


def test_mc_risk_matches_closed_forms():
    gamma = np.array([0.5, -0.5, 0.25, 0.0, 1.0])
    cfg = make_config(30, 1, 5, gamma=gamma, sigma2=1.0, seed=3)
    report = mc_risk(cfg, ["ols-long", "ols-short", "eb"], 20_000)
    assert risk.oracle_check(report, "ols-long", risk_ols_long(30, 1, 5, 1.0)).passed
    assert risk.oracle_check(report, "ols-short", risk_ols_short(1, 1.0, gamma, np.eye(5))).passed
    for name in ("ols-long", "ols-short", "eb"):
        assert report[name].loss_se > 0
        assert risk.unbiasedness_check(report, name).passed


def test_noiseless_losses_are_zero():
    cfg = make_config(12, 1, 3, beta=[2.0], sigma2=0.0, seed=4)
    report = mc_risk(cfg, ["ols-long", "ols-short", "shrink", "shrink-pp", "eb"], 2)
    for er in report.estimators.values():
        assert er.mean_loss <= 1e-20
        assert er.reps == 2


def test_mc_risk_rejects_bad_arguments():
    cfg = make_config(12, 1, 3)
    with pytest.raises(ValueError):
        mc_risk(cfg, ["ols-long"], 1)
    with pytest.raises(ValueError):
        mc_risk(cfg, ["ols-long", "ols-long"], 10)


def test_common_random_numbers_and_pair_sign():
    cfg = make_config(25, 1, 4, gamma=[1, 0, 0, 0], seed=5)
    report = mc_risk(cfg, ["ols-long", "shrink"], 500, keep_draws=True)
    diff = report.losses["ols-long"] - report.losses["shrink"]
    mean, se = mean_se(diff)
    pr = report.pair("ols-long", "shrink")
    assert (pr.loss_diff_mean, pr.loss_diff_se) == (mean, se)
    rev = report.pair("shrink", "ols-long")
    assert rev.loss_diff_mean == -mean and rev.loss_diff_se == se
    # a single-arm run sees the same data: identical per-arm numbers
    alone = mc_risk(cfg, ["shrink"], 500)
    assert alone["shrink"].mean_loss == report["shrink"].mean_loss


def test_worker_count_and_chunking_do_not_change_results():
    cfg = make_config(20, 2, 4, gamma=[1, 0.5, 0, 0], seed=6)
    specs = ["ols-long", "ols-short", "eb", EstimatorSpec("gbayes", tau2=1.0)]
    base = mc_risk(cfg, specs, 1300, workers=1)
    for workers, chunk in ((4, 500), (3, 97), (1, 1300)):
        other = mc_risk(cfg, specs, 1300, workers=workers, chunk=chunk)
        assert other.to_csv() == base.to_csv()
        assert other.to_json() == base.to_json()


def test_worker_env_var(monkeypatch):
    monkeypatch.setenv("SHRINKREG_THREADS", "3")
    assert risk.default_workers() == 3
    monkeypatch.setenv("SHRINKREG_THREADS", "zero")
    assert risk.default_workers() == 1


def test_report_csv_layout():
    cfg = make_config(15, 2, 3, seed=7)
    report = mc_risk(cfg, ["ols-long", "eb"], 50)
    lines = report.to_csv().splitlines()
    assert lines[0] == ("estimator,mean_loss,loss_se,bias_1,bias_2,bias_se_1,bias_se_2,reps,"
                        "estimator_a,estimator_b,loss_diff_mean,loss_diff_se")
    assert len(lines) == 1 + 2 + 1
    assert lines[1].startswith("ols-long,") and lines[3].startswith(",,,,,,,,ols-long,eb,")
    doc = json.loads(report.to_json())
    assert doc["reps"] == 50 and [e["estimator"] for e in doc["estimators"]] == ["ols-long", "eb"]


def test_failed_replications_are_dropped(monkeypatch):
    cfg = make_config(15, 1, 3, seed=8)
    real = risk.fit_many
    bad = {3, 250}

    def flaky(specs, y, x, w, ps=None):
        if y.ndim == 2:
            raise np.linalg.LinAlgError("batched failure")
        if any(np.array_equal(y, simulate(cfg, r).y) for r in bad):
            raise np.linalg.LinAlgError("singular")
        return real(specs, y, x, w, ps)

    monkeypatch.setattr(risk, "fit_many", flaky)
    report = mc_risk(cfg, ["ols-long", "ols-short"], 400)
    assert report.failures == 2 and report.reps == 398
    assert any("excluded" in note for note in report.warnings)
    bad.update(range(10, 20))
    with pytest.raises(risk.TooManyFailures):
        mc_risk(cfg, ["ols-long"], 400)


def test_outside_interval_note():
    cfg = make_config(9, 1, 4, seed=9)  # n - m - k = 4
    report = mc_risk(cfg, ["ols-long", "eb"], 10)
    assert any("default p outside dominance interval" in note for note in report.warnings)


# --------------------------------------------------------------------------
# bias under endogenous treatment


def test_lemma1_bias_example():
    cfg = make_config(20, 1, 2, gamma=[2.0, 3.0], beta_w=[[1.0, 0.0]], seed=10)
    res = lemma1_bias_check(cfg, "ols-short", reps=4000)
    assert res.passed
    assert abs(res.values["bias"][0] - 2.0) < 0.1
    assert res.values["expected"] == [2.0]


def test_lemma1_zero_gamma_and_exogenous_rules():
    cfg = make_config(20, 1, 2, gamma=[0.0, 0.0], beta_w=[[1.0, 0.5]], seed=11)
    assert lemma1_bias_check(cfg, "ols-short", reps=2000).passed
    cfg = make_config(25, 1, 4, gamma=[1.0, 1.0, 0.0, 0.0], seed=12)
    for spec in ("ols-long", "ols-short", "eb", EstimatorSpec("shrink-pp", p=0.1)):
        res = lemma1_bias_check(cfg, spec, reps=2000)
        assert res.passed and res.values["expected"] == [0.0]


def test_lemma1_shrinkage_bias_uses_first_stage_mean():
    cfg = make_config(25, 1, 4, gamma=[0.3, 0.3, 0.0, 0.0], beta_w=[[1.0, 1.0, 0.0, 0.0]], seed=13)
    res = lemma1_bias_check(cfg, "eb", reps=3000)
    assert res.passed
    assert res.values["expected"][0] > 0.01  # shrinking toward zero leaves part of beta_w gamma


# --------------------------------------------------------------------------
# prediction-problem equivalence


def test_corollary_equivalence_closed_forms():
    gamma = np.array([0.5, 0.5, -0.5, 0.0])
    cfg = make_config(20, 1, 4, gamma=gamma, seed=14)
    short = corollary_prediction_equivalence(cfg, "ols-short", reps=6000)
    long_ = corollary_prediction_equivalence(cfg, "ols-long", reps=6000)
    assert short.passed and long_.passed
    for res, expected in ((short, risk_ols_short(1, 1.0, gamma, np.eye(4))), (long_, risk_ols_long(20, 1, 4, 1.0))):
        assert abs(res.values["prediction"] - expected) <= 4 * res.values["prediction_se"]
    assert corollary_prediction_equivalence(cfg, "eb", reps=6000).passed


def test_corollary_equivalence_noiseless():
    cfg = make_config(15, 1, 3, sigma2=0.0, seed=15)
    res = corollary_prediction_equivalence(cfg, "eb", reps=100)
    assert res.passed and res.values["risk"] == 0.0 and res.values["prediction"] == 0.0


def test_corollary_equivalence_requires_exogeneity():
    cfg = make_config(15, 1, 3, beta_w=[[1.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        corollary_prediction_equivalence(cfg, "eb", reps=100)


# --------------------------------------------------------------------------
# conditional loss decomposition


def _fixed_design(seed, n=20, m=1, k=4):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, m)), rng.standard_normal((n, k))


def test_decomposition_ols_closed_form():
    x, w = _fixed_design(16)
    res = loss_decomposition_check(x, w, "ols-long", beta=[1.0], gamma=[1, 0, 0, 0], sigma2=1.0, reps=4000)
    assert res.passed
    cf = res.values["closed_form"]
    assert abs(res.values["rhs"] - cf) <= 4 * res.values["rhs_se"]


def test_decomposition_noiseless():
    x, w = _fixed_design(17)
    res = loss_decomposition_check(x, w, "eb", beta=[1.0], gamma=[0, 0, 0, 0], sigma2=0.0, reps=100)
    assert res.passed and res.values["lhs"] <= 1e-20 and res.values["rhs"] <= 1e-20


def test_decomposition_holds_for_shrinkage_even_when_it_loses():
    x, w = _fixed_design(18, n=16, k=5)
    gamma = np.array([3.0, 0.0, 0.0, 0.0, 0.0])
    results = {}
    for spec in ("ols-long", "eb", "shrink-pp", EstimatorSpec("gbayes", tau2=0.5)):
        res = loss_decomposition_check(x, w, spec, beta=[0.5], gamma=gamma, sigma2=1.0, reps=3000, seed=1)
        assert res.passed
        results[res.name] = res.values["lhs"]
    # conditional comparisons are recorded, not asserted in either direction
    assert all(np.isfinite(v) for v in results.values())


# --------------------------------------------------------------------------
# deterministic invariances and the Gauss-Markov comparison


def test_invariance_checks_pass_for_every_rule():
    cfg = make_config(20, 2, 4, gamma=[1, -1, 0.5, 0], seed=19)
    data = simulate(cfg, 0)
    specs = ["ols-long", "ols-short", "shrink", "shrink-pp", "eb"]
    for spec in [EstimatorSpec(s) for s in specs] + [EstimatorSpec("gbayes", tau2=2.0)]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for res in invariance_checks(data, spec):
                assert res.passed, res.line()


def test_shrinkage_lowers_variance_without_bias():
    cfg = make_config(40, 1, 8, gamma=np.full(8, 0.1), seed=20)
    report = mc_risk(cfg, ["ols-long", "eb"], 20_000, keep_draws=True)
    var = variance_comparison(report, "eb", "ols-long")
    assert var.loss_diff_mean < 0 and var.z <= -5
    for name in ("ols-long", "eb"):
        assert risk.unbiasedness_check(report, name).passed
    with pytest.raises(ValueError):
        variance_comparison(mc_risk(cfg, ["ols-long", "eb"], 10), "eb", "ols-long")


@pytest.mark.slow
@pytest.mark.parametrize("n,k,frac", [(30, 5, 0.25), (50, 10, 0.5), (25, 6, 0.9)])
def test_dominance_grid(n, k, frac):
    cfg = make_config(n, 1, k, seed=21)
    p = frac * p_upper_bound(n, 1, k)
    report = mc_risk(cfg, ["ols-long", EstimatorSpec("shrink", p=p)], 100_000)
    assert risk.dominance_check(report, "shrink", "ols-long", z=5).passed
