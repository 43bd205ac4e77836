"""Scalar binary-signal example contrasting PLMMSE with naive averaging.

``x`` is +1 or -1 with equal probability, ``y = x + u`` and ``z = x + v``
with independent Gaussian noises. ``E[x|z]`` is available in closed form;
the PLMMSE estimator combines it with ``y`` using a single weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from ._errors import InvalidInputError
from .linalg import gaussian_logpdf
from .results import ResultTable, mean_and_se, run_rng

__all__ = [
    "ScalarToyConfig",
    "ToyCurves",
    "toy_conditional_mean",
    "toy_xhat_variance",
    "toy_gamma",
    "toy_mse_curves",
    "toy_experiment",
]


@dataclass(frozen=True)
class ScalarToyConfig:
    sigma_u2: float
    sigma_v2: float

    def __post_init__(self):
        if not (self.sigma_u2 > 0 and self.sigma_v2 > 0):
            raise InvalidInputError("sigma_u2 and sigma_v2 must be strictly positive")


def toy_conditional_mean(z, cfg):
    """``E[x|z]`` as the ratio of the two Gaussian likelihoods.

    ``(N(z-1) - N(z+1)) / (N(z-1) + N(z+1))`` is evaluated through the log
    likelihood ratio to stay finite for large ``|z|``.
    """
    z = np.asarray(z, dtype=float)
    llr = gaussian_logpdf(z, 1.0, cfg.sigma_v2) - gaussian_logpdf(z, -1.0, cfg.sigma_v2)
    out = np.tanh(0.5 * llr)
    return float(out) if out.ndim == 0 else out


def toy_xhat_variance(cfg, nodes=200):
    """Variance of ``E[x|z]`` by Gauss-Hermite quadrature (it has zero mean)."""
    t, w = hermegauss(nodes)
    # by symmetry condition on x = +1
    zz = 1.0 + np.sqrt(cfg.sigma_v2) * t
    return float(np.sum(w * toy_conditional_mean(zz, cfg) ** 2) / np.sqrt(2 * np.pi))


def toy_gamma(cfg):
    """Weight on ``y`` in ``x_pl = gamma * y + (1 - gamma) * E[x|z]``."""
    v = toy_xhat_variance(cfg)
    return (1.0 - v) / (1.0 + cfg.sigma_u2 - v)


@dataclass
class ToyCurves:
    alphas: np.ndarray
    gamma: float
    plmmse_mse: float
    plmmse_se: float
    naive_mse: np.ndarray
    naive_se: np.ndarray
    gap_se: float

    @property
    def best_naive(self):
        return float(self.naive_mse.min())

    @property
    def relative_gap(self):
        """Fractional MSE reduction of PLMMSE relative to the best naive weight."""
        return 1.0 - self.plmmse_mse / self.best_naive


def toy_mse_curves(cfg, alphas, mc_count, rng=None):
    """Monte Carlo MSE of PLMMSE and of ``a * x_L(y) + (1 - a) * E[x|z]``.

    ``gap_se`` is the standard error of the paired difference between the
    PLMMSE error and the error of the best naive weight.
    """
    alphas = np.asarray(alphas, dtype=float).ravel()
    if alphas.size == 0:
        raise InvalidInputError("alpha grid is empty")
    if np.any((alphas < 0) | (alphas > 1)):
        raise InvalidInputError("alphas must lie in [0, 1]")
    mc_count = int(mc_count)
    if mc_count < 2:
        raise InvalidInputError("mc_count must be at least 2")
    rng = np.random.default_rng(rng)
    x = rng.choice([-1.0, 1.0], size=mc_count)
    y = x + rng.normal(0.0, np.sqrt(cfg.sigma_u2), mc_count)
    z = x + rng.normal(0.0, np.sqrt(cfg.sigma_v2), mc_count)
    xz = toy_conditional_mean(z, cfg)
    xl = y / (1.0 + cfg.sigma_u2)
    gamma = toy_gamma(cfg)
    err_pl = (gamma * y + (1.0 - gamma) * xz - x) ** 2
    err_naive = (alphas[:, None] * xl + (1.0 - alphas[:, None]) * xz - x) ** 2
    pl_mse, pl_se = mean_and_se(err_pl)
    nv_mse, nv_se = mean_and_se(err_naive, axis=1)
    best = int(np.argmin(nv_mse))
    _, gap_se = mean_and_se(err_pl - err_naive[best])
    return ToyCurves(alphas, gamma, float(pl_mse), float(pl_se), nv_mse, nv_se, float(gap_se))


def toy_experiment(sigma_u2=1.0, sigma_v2=1.0, n_alphas=41, mc_count=100_000, seed=0):
    """Naive-combination MSE curve plus the PLMMSE point as a table.

    Rows: one per alpha with ``is_plmmse = 0``, then a single PLMMSE row with
    ``is_plmmse = 1`` and ``alpha = nan``.
    """
    cfg = ScalarToyConfig(sigma_u2, sigma_v2)
    alphas = np.linspace(0.0, 1.0, int(n_alphas))
    curves = toy_mse_curves(cfg, alphas, mc_count, run_rng(seed, 0))
    rows = [[0.0, a, m, s] for a, m, s in zip(alphas, curves.naive_mse, curves.naive_se)]
    rows.append([1.0, np.nan, curves.plmmse_mse, curves.plmmse_se])
    meta = {
        "experiment": "toy",
        "seed": seed,
        "mc_count": mc_count,
        "sigma_u2": float(sigma_u2),
        "sigma_v2": float(sigma_v2),
        "gamma": curves.gamma,
        "relative_gap": curves.relative_gap,
        "gap_se": curves.gap_se,
    }
    return ResultTable(["is_plmmse", "alpha", "mse", "mse_se"], np.array(rows), meta)
