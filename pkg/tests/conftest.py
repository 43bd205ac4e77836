import numpy as np
import pytest


def mixture_moments(mix):
    """Exact mean and covariance of the stacked ``(x, y)`` of a DiscreteZMixture."""
    w = mix.z_probs[:, None] * mix.weights
    mean = np.einsum("cj,cjd->d", w, mix.means)
    second = np.einsum("cj,cjde->de", w, mix.covs + np.einsum("cjd,cje->cjde", mix.means, mix.means))
    return mean, second - np.outer(mean, mean)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(number, passed, detail):
    """Record and print one acceptance line."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
