import re

import pytest

import plmmse.core
from plmmse.selftest import SUITES, quadrature_posterior_mean, run_selftest, run_suite

LINE = re.compile(
    r"^suite (\w+): (PASS|FAIL) max_error=\S+ tolerance=\S+ cases=\d+ seconds=\d+\.\d\d$"
)


@pytest.mark.parametrize("name", list(SUITES))
def test_each_quick_suite_passes(name):
    result = run_suite(name, "quick", seed=1)
    assert result.passed, result.line()
    assert result.cases > 0
    assert LINE.match(result.line())


def test_results_keep_suite_order():
    names = [r.name for r in run_selftest("quick", names=["penrose", "brute_force"])]
    assert names == ["penrose", "brute_force"]
    with pytest.raises(ValueError):
        run_selftest("medium")


def test_sign_flip_fails_batch_recursive(monkeypatch):
    original = plmmse.core.additive_noise_gain
    monkeypatch.setattr(plmmse.core, "additive_noise_gain",
                        lambda *a, **k: -original(*a, **k))
    result = run_suite("batch_recursive")
    assert not result.passed
    assert result.line().startswith("suite batch_recursive: FAIL")


def test_quadrature_oracle_on_gaussian_prior():
    # a single Gaussian component has the closed-form posterior mean
    for z in (-3.0, 0.2, 5.0):
        got = quadrature_posterior_mean(z, 1.0, 2.0, 0.0, 0.5, 0.3)
        assert got == pytest.approx(0.5 * 2.0 * z / (0.25 * 2.0 + 0.3), rel=1e-9)

