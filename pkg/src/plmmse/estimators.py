"""scikit-learn style wrappers around the static estimators.

The regression target is the signal ``x``. The feature matrix holds the
linear measurements ``y`` in its first ``n_linear`` columns and the
conditioning measurements ``z`` in the remaining ones.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._errors import InvalidInputError
from .core import (
    AdditiveNoiseModel,
    CellMeanRegressor,
    JointMomentModel,
    conditional_plmmse_discrete,
    separable_plmmse,
)
from .linalg import empirical_moments, hadamard_dictionary, pseudo_inverse
from .sparse import SpikeSlabPrior, compute_beta, sparse_plmmse_estimate, sparse_plmmse_gain

__all__ = [
    "LinearMMSERegressor",
    "PartiallyLinearRegressor",
    "ConditionalPartiallyLinearRegressor",
    "SparsePLMMSE",
]


def _as_target(t):
    t = np.asarray(t, dtype=float)
    return t[:, None] if t.ndim == 1 else t


def _shape_output(out, single):
    return out[:, 0] if single else out


class _SplitMixin:
    def _split(self, X):
        k = int(self.n_linear)
        if not 0 < k < X.shape[1]:
            raise InvalidInputError(
                f"n_linear={k} must leave at least one linear and one conditioning column"
            )
        return X[:, :k], X[:, k:]


class LinearMMSERegressor(RegressorMixin, BaseEstimator):
    """Affine LMMSE of the target from all features, fitted by sample moments.

    Parameters
    ----------
    tol : float, default=0.0
        Pseudo-inverse cutoff (0 selects the default relative tolerance).
    """

    def __init__(self, tol=0.0):
        self.tol = tol

    def fit(self, X, y):
        X, t = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single = np.ndim(y) == 1
        t = _as_target(t)
        mf, mt, cff, cft, _ = empirical_moments(X, t)
        self.coef_ = cft.T @ pseudo_inverse(cff, self.tol)
        self.intercept_ = mt - self.coef_ @ mf
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return _shape_output(X @ self.coef_.T + self.intercept_, self._single)


class PartiallyLinearRegressor(_SplitMixin, RegressorMixin, BaseEstimator):
    """Best estimator linear in ``y`` and arbitrary in ``z``.

    Parameters
    ----------
    n_linear : int
        Number of leading feature columns entering linearly.
    conditional_mean : callable, optional
        ``z -> (E[x|z], E[y|z])``. When omitted ``z`` is treated as discrete
        and the conditional means are per-cell sample means.

    Attributes
    ----------
    coef_ : ndarray of shape (n_targets, n_linear)
        Gain applied to ``y``.
    """

    def __init__(self, n_linear=1, conditional_mean=None):
        self.n_linear = n_linear
        self.conditional_mean = conditional_mean

    def fit(self, X, y):
        X, t = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single = np.ndim(y) == 1
        t = _as_target(t)
        ylin, z = self._split(X)
        regressor = self.conditional_mean
        if regressor is None:
            regressor = CellMeanRegressor(t, ylin, z)
        model = JointMomentModel.from_samples(t, ylin)
        self.estimator_ = separable_plmmse(model, regressor, (ylin, z))
        self.coef_ = self.estimator_.gain
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "estimator_")
        X = check_array(X)
        ylin, z = self._split(X)
        return _shape_output(self.estimator_.estimate(ylin, z), self._single)


class ConditionalPartiallyLinearRegressor(_SplitMixin, RegressorMixin, BaseEstimator):
    """Per-cell LMMSE ``A(z) y + b(z)`` for a finite-alphabet ``z``."""

    def __init__(self, n_linear=1):
        self.n_linear = n_linear

    def fit(self, X, y):
        X, t = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single = np.ndim(y) == 1
        ylin, z = self._split(X)
        self.estimator_ = conditional_plmmse_discrete(_as_target(t), ylin, z)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "estimator_")
        X = check_array(X)
        ylin, z = self._split(X)
        return _shape_output(self.estimator_.estimate(ylin, z), self._single)


class SparsePLMMSE(BaseEstimator):
    """Model-based PLMMSE for ``y = H x + u``, ``z = G x + v``, sparse ``x``.

    The signal is ``x = Psi w`` with spike-and-slab coefficients ``w``.
    ``fit`` needs no training data: it computes the shrinkage statistics and
    the gain from the parameters. ``predict`` takes rows ``[y, z]``.

    Parameters
    ----------
    H, G : array_like
        Channel matrices; ``G`` must satisfy ``G^T G = alpha^2 I``.
    sigma_u_sq, sigma_v_sq : float
    p, sigma1_sq, sigma2_sq : float or array_like
        Spike-and-slab parameters (broadcast over coefficients).
    dictionary : array_like, optional
        Orthonormal ``Psi``; a normalized Hadamard matrix by default.
    homogeneous : bool, default=False
        Use the dictionary-free gain (requires homogeneous parameters).
    """

    def __init__(self, H=None, G=None, sigma_u_sq=1.0, sigma_v_sq=1.0, p=0.5, sigma1_sq=1.0,
                 sigma2_sq=0.0, dictionary=None, homogeneous=False):
        self.H = H
        self.G = G
        self.sigma_u_sq = sigma_u_sq
        self.sigma_v_sq = sigma_v_sq
        self.p = p
        self.sigma1_sq = sigma1_sq
        self.sigma2_sq = sigma2_sq
        self.dictionary = dictionary
        self.homogeneous = homogeneous

    def fit(self, X=None, y=None):
        if self.H is None or self.G is None:
            raise InvalidInputError("H and G must be given")
        self.model_ = AdditiveNoiseModel(self.H, self.G, self.sigma_u_sq, self.sigma_v_sq)
        self.model_.check_orthogonal()
        m = self.model_.dim_x
        self.prior_ = SpikeSlabPrior(
            np.broadcast_to(self.p, (m,)),
            np.broadcast_to(self.sigma1_sq, (m,)),
            np.broadcast_to(self.sigma2_sq, (m,)),
        )
        self.dictionary_ = (
            hadamard_dictionary(m) if self.dictionary is None else np.asarray(self.dictionary, float)
        )
        self.stats_ = compute_beta(self.prior_, self.model_.alpha, self.model_.sigma_v_sq)
        self.gain_ = sparse_plmmse_gain(
            self.model_, self.prior_, self.stats_, self.dictionary_, self.homogeneous
        )
        self.n_features_in_ = self.model_.H.shape[0] + self.model_.G.shape[0]
        return self

    def _split(self, X):
        X = check_array(X)
        n = self.model_.H.shape[0]
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"expected {self.n_features_in_} columns [y, z], got {X.shape[1]}"
            )
        return X[:, :n], X[:, n:]

    def predict(self, X):
        check_is_fitted(self, "gain_")
        y, z = self._split(X)
        return np.atleast_2d(
            sparse_plmmse_estimate(y, z, self.model_, self.prior_, self.dictionary_, self.gain_)
        )

    def score(self, X, x_true):
        """Negative mean squared error per sample."""
        err = self.predict(X) - np.atleast_2d(x_true)
        return -float(np.mean(np.sum(err**2, axis=1)))
