import numpy as np
import pytest

from shrinkreg.model import RegressionData


def random_data(rng, n, m, k, sigma=1.0, gamma_scale=1.0):
    x = rng.standard_normal((n, m))
    w = rng.standard_normal((n, k)) + 0.3 * x[:, :1]
    beta = rng.standard_normal(m)
    gamma = gamma_scale * rng.standard_normal(k)
    y = 0.7 + x @ beta + w @ gamma + sigma * rng.standard_normal(n)
    return RegressionData(y, x, w)


def random_sizes(rng, n_max=40):
    m = int(rng.integers(1, 4))
    k = int(rng.integers(3, 7))
    n = int(rng.integers(m + k + 4, n_max + 1))
    return n, m, k


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        passed, detail = mod.RESULTS[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'} {detail}")
