"""Worst-case distribution under which PLMMSE is the MMSE estimator.

Given ``Cov(x) = C_xx``, ``Cov(x, y) = C_xy``, ``E[x|z] = g(z)`` and a
sampler for ``(y, z)``, the construction

    x = C_{x,yt} pinv(C_{yt,yt}) (y - h(z)) + g(z) + u,
    Cov(u) = C_xx - Cov(g(z)) - C_{x,yt} pinv(C_{yt,yt}) C_{yt,x},

with ``h(z) = E[y|z]``, ``yt = y - h(z)`` and ``u`` independent of
``(y, z)``, satisfies every constraint. Under it no estimator of ``x`` from
``(y, z)`` beats the PLMMSE estimator, which makes the PLMMSE worst-case
MSE minimal over the constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._errors import InfeasibleConstraintsError, InvalidInputError
from .core import JointMomentModel, PartiallyLinearEstimator, _rows, separable_plmmse
from .linalg import check_finite, empirical_moments, pseudo_inverse
from .results import ResultTable, mean_and_se, run_rng

__all__ = [
    "MinimaxConstruction",
    "build_worst_case",
    "sample_worst_case",
    "minimax_check",
    "MinimaxReport",
    "minimax_experiment",
]


@dataclass
class MinimaxConstruction:
    yz_sampler: Callable
    g: Callable
    h: Callable
    cov_uu: np.ndarray
    gain: np.ndarray
    plmmse: PartiallyLinearEstimator
    cov_xx: np.ndarray
    cov_xy: np.ndarray
    clipped_eigenvalues: int = 0

    @property
    def dim_x(self):
        return self.cov_uu.shape[0]

    def predict(self, y, z):
        """``gain (y - h(z)) + g(z)``: the MMSE estimator under the construction."""
        y = _rows(y, "y", self.gain.shape[1])
        z = np.asarray(z, dtype=float)
        return (y - _rows(self.h(z), "h(z)", self.gain.shape[1])) @ self.gain.T + _rows(
            self.g(z), "g(z)", self.dim_x
        )


def build_worst_case(cov_xx, cov_xy, g, yz_sampler, h, mc_count=100_000, rng=None, psd_tol=1e-6):
    """Assemble the worst-case construction from Monte Carlo moments.

    Parameters
    ----------
    cov_xx, cov_xy : array_like
        Target second-order moments.
    g : callable
        Target conditional mean ``z -> E[x|z]`` (row-wise).
    yz_sampler : callable
        ``(count, rng) -> (y, z)`` draws from the given law of ``(y, z)``.
    h : callable
        ``z -> E[y|z]`` under that law.
    mc_count : int
        Draws used to estimate ``Cov(g)``, ``Cov(g, h)``, ``Cov(h)`` and
        ``Cov(y)``.

    Raises
    ------
    InfeasibleConstraintsError
        If ``Cov(u)`` has an eigenvalue below ``-psd_tol``; eigenvalues in
        ``[-psd_tol, 0)`` are clipped to zero.
    """
    if mc_count < 10_000:
        raise InvalidInputError("mc_count must be at least 1e4")
    cov_xx = np.atleast_2d(check_finite(cov_xx, "cov_xx"))
    m = cov_xx.shape[0]
    cov_xy = np.atleast_2d(check_finite(cov_xy, "cov_xy")).reshape(m, -1)
    n = cov_xy.shape[1]
    rng = np.random.default_rng(rng)
    y, z = yz_sampler(int(mc_count), rng)
    y = _rows(y, "y", n)
    gz = _rows(g(z), "g(z)", m)
    hz = _rows(h(z), "h(z)", n)
    mean_y, _, cov_yy, _, _ = empirical_moments(y, y)
    _, _, cov_gg, cov_gh, cov_hh = empirical_moments(gz, hz)
    c_x_yt = cov_xy - cov_gh
    c_yt_yt = cov_yy - cov_hh
    gain = c_x_yt @ pseudo_inverse(c_yt_yt)
    cov_uu = cov_xx - cov_gg - gain @ c_x_yt.T
    cov_uu = 0.5 * (cov_uu + cov_uu.T)
    vals, vecs = np.linalg.eigh(cov_uu)
    if vals.min() < -psd_tol:
        raise InfeasibleConstraintsError(
            f"residual covariance has eigenvalue {vals.min():.3g} < -{psd_tol:g}; "
            "the moment constraints are not jointly attainable"
        )
    clipped = int(np.sum(vals < 0))
    cov_uu = (vecs * np.maximum(vals, 0.0)) @ vecs.T

    # PLMMSE from the knowledge set alone, built through the generic path
    model = JointMomentModel(
        np.zeros(m), mean_y, cov_xx, cov_xy, cov_yy, psd_tol=max(psd_tol, 1e-9)
    ) if _joint_psd(cov_xx, cov_xy, cov_yy, psd_tol) else None
    if model is None:
        raise InfeasibleConstraintsError("target (cov_xx, cov_xy) is incompatible with Cov(y)")

    def regressor(zz):
        return g(zz), h(zz)

    plmmse = separable_plmmse(model, regressor, (y, z))
    return MinimaxConstruction(
        yz_sampler, g, h, cov_uu, gain, plmmse, cov_xx, cov_xy, clipped
    )


def _joint_psd(cxx, cxy, cyy, tol):
    block = np.block([[cxx, cxy], [cxy.T, cyy]])
    return np.linalg.eigvalsh(0.5 * (block + block.T)).min() >= -tol * max(1.0, np.abs(block).max())


def sample_worst_case(c, count, seed=None):
    """Draw ``(x, y, z)`` from the worst-case law; ``u`` is Gaussian."""
    count = int(count)
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    y, z = c.yz_sampler(count, rng)
    vals, vecs = np.linalg.eigh(c.cov_uu)
    root = vecs * np.sqrt(np.maximum(vals, 0.0))
    u = rng.standard_normal((count, c.dim_x)) @ root.T
    x = c.predict(y, z) + u
    return x, _rows(y, "y", c.gain.shape[1]), np.asarray(z, dtype=float)


@dataclass
class MinimaxReport:
    names: list
    mse: np.ndarray
    se: np.ndarray
    diff: np.ndarray  # challenger minus PLMMSE, paired
    diff_se: np.ndarray
    plmmse_mse: float
    plmmse_se: float
    max_prediction_gap: float
    extra: dict = field(default_factory=dict)

    def dominated(self, n_se=3.0):
        """True where PLMMSE MSE <= challenger MSE + n_se standard errors."""
        return self.diff >= -n_se * self.diff_se


def minimax_check(c, challengers, mc_count=100_000, seed=None):
    """Compare PLMMSE with ``challengers`` on fresh worst-case draws.

    ``challengers`` maps a name to a callable ``(y, z) -> x_hat``.
    ``max_prediction_gap`` is the largest pointwise difference between the
    PLMMSE built from the knowledge set and the construction's closed form
    ``gain (y - h(z)) + g(z)``.
    """
    x, y, z = sample_worst_case(c, mc_count, seed)
    pl = c.plmmse.estimate(y, z)
    gap = float(np.abs(pl - c.predict(y, z)).max())
    err_pl = np.sum((pl - x) ** 2, axis=1)
    names, mses, ses, diffs, dses = [], [], [], [], []
    for name, fn in challengers.items():
        est = _rows(fn(y, z), name, c.dim_x)
        err = np.sum((est - x) ** 2, axis=1)
        m_, s_ = mean_and_se(err)
        d_, ds_ = mean_and_se(err - err_pl)
        names.append(name)
        mses.append(m_)
        ses.append(s_)
        diffs.append(d_)
        dses.append(ds_)
    pm, ps = mean_and_se(err_pl)
    return MinimaxReport(
        names, np.array(mses), np.array(ses), np.array(diffs), np.array(dses),
        float(pm), float(ps), gap,
    )


def _demo_setup(seed):
    """Scalar-``z`` law with non-Gaussian ``y`` and a nonlinear ``g``."""
    rng = run_rng(seed, 1)
    m, n = 2, 2
    mix = rng.normal(size=(n, n))
    c_g = np.array([0.8, -0.5])

    def yz_sampler(count, r):
        z = r.normal(size=(count, 1))
        noise = r.laplace(size=(count, n)) @ mix.T
        return h(z) + noise, z

    def h(z):
        z = np.asarray(z, dtype=float).reshape(-1, 1)
        return np.hstack([np.sin(2 * z), z**2 - 1])

    def g(z):
        z = np.asarray(z, dtype=float).reshape(-1, 1)
        return np.tanh(z) * c_g

    a = rng.normal(size=(m, m))
    cov_xx = a @ a.T + 2.0 * np.eye(m)
    cov_xy = 0.3 * rng.normal(size=(m, n))
    return cov_xx, cov_xy, g, yz_sampler, h


def random_feature_challenger(c, train_count, rng, width=64):
    """Least-squares fit of ``x`` on random Fourier features of ``(y, z)``."""
    x, y, z = sample_worst_case(c, train_count, rng)
    feats_in = np.hstack([y, np.asarray(z, dtype=float).reshape(len(y), -1)])
    w = rng.normal(size=(feats_in.shape[1], width))
    b = rng.uniform(0, 2 * np.pi, width)

    def features(yy, zz):
        f = np.hstack([yy, np.asarray(zz, dtype=float).reshape(len(yy), -1)])
        return np.hstack([np.ones((len(yy), 1)), f, np.cos(f @ w + b)])

    coef, *_ = np.linalg.lstsq(features(y, z), x, rcond=None)
    return lambda yy, zz: features(_rows(yy, "y"), zz) @ coef


def joint_lmmse_challenger(c, train_count, rng):
    """Affine least squares of ``x`` on ``[y, z]``."""
    x, y, z = sample_worst_case(c, train_count, rng)
    f = np.hstack([y, np.asarray(z, dtype=float).reshape(len(y), -1)])
    mf, mx, cff, cfx, _ = empirical_moments(f, x)
    gain = cfx.T @ pseudo_inverse(cff)

    def predict(yy, zz):
        ff = np.hstack([_rows(yy, "y"), np.asarray(zz, dtype=float).reshape(len(yy), -1)])
        return (ff - mf) @ gain.T + mx

    return predict


def minimax_experiment(mc_count=100_000, n_challengers=5, seed=0):
    """Worst-case check on a built-in non-Gaussian example.

    Rows: one per challenger (joint LMMSE, mean predictor, random-feature
    regressions), with the paired MSE excess over PLMMSE.
    """
    cov_xx, cov_xy, g, sampler, h = _demo_setup(seed)
    c = build_worst_case(cov_xx, cov_xy, g, sampler, h, mc_count, run_rng(seed, 2))
    mean_x = np.mean(sample_worst_case(c, mc_count, run_rng(seed, 4))[0], axis=0)
    challengers = {
        "joint_lmmse": joint_lmmse_challenger(c, mc_count, run_rng(seed, 5)),
        "mean": lambda yy, zz: np.tile(mean_x, (len(yy), 1)),
    }
    for k in range(int(n_challengers)):
        challengers[f"features_{k}"] = random_feature_challenger(c, mc_count, run_rng(seed, 10 + k))
    rep = minimax_check(c, challengers, mc_count, run_rng(seed, 6))
    rows = [[i, rep.mse[i], rep.se[i], rep.diff[i], rep.diff_se[i]] for i in range(len(rep.names))]
    meta = {
        "experiment": "minimax",
        "seed": seed,
        "mc_count": mc_count,
        "challengers": rep.names,
        "plmmse_mse": rep.plmmse_mse,
        "plmmse_se": rep.plmmse_se,
        "max_prediction_gap": rep.max_prediction_gap,
        "trace_cov_xx": float(np.trace(cov_xx)),
    }
    return ResultTable(["challenger", "mse", "mse_se", "excess", "excess_se"], np.array(rows), meta)
