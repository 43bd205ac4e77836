"""Partially linear MMSE estimators.

An estimator in this family has the form ``x_hat = A y + b(z)``: linear in
one set of measurements ``y`` and arbitrary in another set ``z``. The
optimal separable estimator needs only the cross-covariance of ``(x, y)``,
the conditional mean ``E[x|z]`` and the joint law of ``(y, z)``.

Sample arrays use the ``(n_samples, dim)`` convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._errors import InsufficientDataError, InvalidInputError
from .linalg import check_finite, empirical_moments, pseudo_inverse

__all__ = [
    "JointMomentModel",
    "AdditiveNoiseModel",
    "PartiallyLinearEstimator",
    "ConditionalPLMMSE",
    "CellMeanRegressor",
    "lmmse_gain",
    "conditional_plmmse_discrete",
    "separable_plmmse",
    "additive_noise_gain",
    "additive_noise_plmmse",
]


def _rows(a, name, dim=None):
    arr = check_finite(a, name)
    if arr.ndim == 1:
        arr = arr[:, None] if dim in (None, 1) else arr[None, :]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 1-D or 2-D")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidInputError(f"{name} has {arr.shape[1]} columns, expected {dim}")
    return arr


def _is_psd(m, tol):
    if m.size == 0:
        return True
    return np.linalg.eigvalsh(0.5 * (m + m.T)).min() >= -tol


@dataclass(frozen=True)
class JointMomentModel:
    """First and second moments of ``(x, y)``."""

    mean_x: np.ndarray
    mean_y: np.ndarray
    cov_xx: np.ndarray
    cov_xy: np.ndarray
    cov_yy: np.ndarray
    psd_tol: float = 1e-9

    def __post_init__(self):
        mx = np.atleast_1d(check_finite(self.mean_x, "mean_x"))
        my = np.atleast_1d(check_finite(self.mean_y, "mean_y"))
        m, n = mx.size, my.size
        cxx = np.atleast_2d(check_finite(self.cov_xx, "cov_xx"))
        cxy = np.atleast_2d(check_finite(self.cov_xy, "cov_xy")).reshape(m, n)
        cyy = np.atleast_2d(check_finite(self.cov_yy, "cov_yy"))
        if cxx.shape != (m, m) or cyy.shape != (n, n):
            raise InvalidInputError("covariance shapes do not match the means")
        for name, c in (("cov_xx", cxx), ("cov_yy", cyy)):
            if not np.allclose(c, c.T, atol=self.psd_tol):
                raise InvalidInputError(f"{name} is not symmetric")
        block = np.block([[cxx, cxy], [cxy.T, cyy]])
        if not _is_psd(block, self.psd_tol * max(1.0, np.abs(block).max())):
            raise InvalidInputError("joint covariance of (x, y) is not PSD")
        for name, v in (("mean_x", mx), ("mean_y", my), ("cov_xx", cxx),
                        ("cov_xy", cxy), ("cov_yy", cyy)):
            object.__setattr__(self, name, v)

    @classmethod
    def from_samples(cls, x, y):
        mx, my, cxx, cxy, cyy = empirical_moments(x, y)
        return cls(mx, my, cxx, cxy, cyy)

    @property
    def dim_x(self):
        return self.mean_x.size

    @property
    def dim_y(self):
        return self.mean_y.size


@dataclass(frozen=True)
class AdditiveNoiseModel:
    """Two linear channels ``y = H x + u`` and ``z = G x + v``.

    ``u`` and ``v`` are zero-mean, white, with variances ``sigma_u_sq`` and
    ``sigma_v_sq``. ``alpha`` is the scale of an orthogonal ``G``
    (``G^T G = alpha^2 I``); when omitted it is inferred from ``G``.
    Orthogonality itself is only enforced by operations that rely on it
    (see :meth:`check_orthogonal`).
    """

    H: np.ndarray
    G: np.ndarray
    sigma_u_sq: float
    sigma_v_sq: float
    alpha: float | None = None

    def __post_init__(self):
        H = np.atleast_2d(check_finite(self.H, "H"))
        G = np.atleast_2d(check_finite(self.G, "G"))
        if H.shape[1] != G.shape[1]:
            raise InvalidInputError("H and G must act on the same signal dimension")
        if self.sigma_u_sq <= 0 or self.sigma_v_sq <= 0:
            raise InvalidInputError("noise variances must be strictly positive")
        alpha = self.alpha
        if alpha is None:
            alpha = float(np.sqrt(np.trace(G.T @ G) / G.shape[1]))
        if alpha == 0:
            raise InvalidInputError("alpha must be nonzero")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "sigma_u_sq", float(self.sigma_u_sq))
        object.__setattr__(self, "sigma_v_sq", float(self.sigma_v_sq))

    @property
    def dim_x(self):
        return self.H.shape[1]

    def orthogonality_deviation(self):
        """Max-abs entry of ``G^T G - alpha^2 I``."""
        gtg = self.G.T @ self.G
        return float(np.abs(gtg - self.alpha**2 * np.eye(gtg.shape[0])).max())

    def check_orthogonal(self, tol=1e-9):
        dev = self.orthogonality_deviation()
        if dev > tol * max(1.0, self.alpha**2):
            raise InvalidInputError(
                f"G is not orthogonal: max |G^T G - alpha^2 I| = {dev:.3g}"
            )


Regressor = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class PartiallyLinearEstimator:
    """``x_hat = gain @ y + b(z)`` with ``b(z) = E[x|z] - gain @ E[y|z]``.

    ``regressor(z)`` must return the pair ``(E[x|z], E[y|z])`` evaluated
    row-wise on an ``(n, Q)`` array.
    """

    gain: np.ndarray
    regressor: Regressor
    h_matrix: np.ndarray | None = None

    def offset(self, z):
        x_hat, y_hat = self.regressor(np.asarray(z, dtype=float))
        return np.atleast_2d(x_hat) - np.atleast_2d(y_hat) @ self.gain.T

    def estimate(self, y, z):
        y = _rows(y, "y", self.gain.shape[1])
        return y @ self.gain.T + self.offset(z)

    __call__ = estimate


def lmmse_gain(cov_xy, cov_yy):
    """LMMSE gain ``cov_xy @ pinv(cov_yy)``."""
    return np.atleast_2d(cov_xy) @ pseudo_inverse(np.atleast_2d(cov_yy))


def _labels(z):
    z = np.asarray(z)
    if z.ndim == 2 and z.shape[1] == 1:
        z = z[:, 0]
    if z.ndim == 1:
        return [k.item() if hasattr(k, "item") else k for k in z]
    return [tuple(r) for r in z.tolist()]


@dataclass
class ConditionalPLMMSE:
    """Per-cell LMMSE estimators indexed by the value of a discrete ``z``."""

    gains: dict = field(default_factory=dict)
    offsets: dict = field(default_factory=dict)

    def estimate(self, y, z):
        y = check_finite(y, "y")
        if y.ndim == 1:
            y = y[:, None]
        labels = _labels(z)
        first = next(iter(self.gains.values()))
        out = np.empty((y.shape[0], first.shape[0]))
        cells = {}
        for i, key in enumerate(labels):
            cells.setdefault(key, []).append(i)
        for key, idx in cells.items():
            if key not in self.gains:
                raise InvalidInputError(f"z value {key!r} was not seen during fitting")
            out[idx] = y[idx] @ self.gains[key].T + self.offsets[key]
        return out

    __call__ = estimate


def conditional_plmmse_discrete(x, y, z, z_alphabet=None):
    """Best estimator of the form ``A(z) y + b(z)`` for finite-alphabet ``z``.

    Each cell of the alphabet gets its own LMMSE estimator computed from the
    conditional sample moments of that cell.

    Raises
    ------
    InsufficientDataError
        If any alphabet cell holds fewer than two samples.
    """
    x = _rows(x, "x")
    y = _rows(y, "y")
    labels = _labels(z)
    if not (len(labels) == x.shape[0] == y.shape[0]):
        raise InvalidInputError("x, y and z must have the same number of samples")
    alphabet = list(dict.fromkeys(labels)) if z_alphabet is None else list(z_alphabet)
    cell_of = {}
    for i, key in enumerate(labels):
        cell_of.setdefault(key, []).append(i)
    unknown = set(cell_of) - set(alphabet)
    if unknown:
        raise InvalidInputError(f"z samples outside the alphabet: {sorted(map(str, unknown))}")
    fit = ConditionalPLMMSE()
    for key in alphabet:
        idx = cell_of.get(key, [])
        if len(idx) < 2:
            raise InsufficientDataError(
                f"z cell {key!r} has {len(idx)} sample(s); at least 2 are needed"
            )
        mx, my, _, cxy, cyy = empirical_moments(x[idx], y[idx])
        gain = lmmse_gain(cxy, cyy)
        fit.gains[key] = gain
        fit.offsets[key] = mx - gain @ my
    return fit


def separable_plmmse(model, regressor, yz_samples):
    """Optimal separable partially linear estimator.

    The gain is ``(C_xy - C_{x_hat y_hat}) pinv(C_yy - C_{y_hat y_hat})``
    where the conditional-mean covariances are obtained by pushing the
    ``z`` half of ``yz_samples`` through ``regressor``.

    Parameters
    ----------
    model : JointMomentModel
    regressor : callable
        ``z -> (E[x|z], E[y|z])`` on ``(n, Q)`` arrays.
    yz_samples : tuple (y, z)
        Draws from the joint law of ``(y, z)``.
    """
    y, z = yz_samples
    y = _rows(y, "y")
    z = _rows(z, "z")
    if y.shape[0] != z.shape[0]:
        raise InvalidInputError("y and z sample counts differ")
    if y.shape[1] != model.dim_y:
        raise InvalidInputError(
            f"y samples have dimension {y.shape[1]}, model expects {model.dim_y}"
        )
    if z.shape[0] < 2:
        raise InsufficientDataError("need at least 2 (y, z) samples")
    x_hat, y_hat = regressor(z)
    x_hat = _rows(x_hat, "E[x|z]", model.dim_x)
    y_hat = _rows(y_hat, "E[y|z]", model.dim_y)
    _, _, _, c_xh_yh, c_yh_yh = empirical_moments(x_hat, y_hat)
    gain = (model.cov_xy - c_xh_yh) @ pseudo_inverse(model.cov_yy - c_yh_yh)
    return PartiallyLinearEstimator(gain, regressor)


def additive_noise_gain(cov_xx, cov_xhat, H, cov_uu):
    """Gain ``(C_xx - C_xhat) H^T pinv(H (C_xx - C_xhat) H^T + C_uu)``."""
    H = np.atleast_2d(H)
    d = np.atleast_2d(cov_xx) - np.atleast_2d(cov_xhat)
    return d @ H.T @ pseudo_inverse(H @ d @ H.T + np.atleast_2d(cov_uu))


def additive_noise_plmmse(model, cov_xx, cov_xhat, conditional_mean=None):
    """PLMMSE estimator for the additive-noise channel pair.

    Returns the estimator ``A y + (I - A H) E[x|z]``.

    Parameters
    ----------
    model : AdditiveNoiseModel
    cov_xx : array_like, shape (M, M)
    cov_xhat : array_like, shape (M, M)
        Covariance of ``E[x|z]``.
    conditional_mean : callable, optional
        ``z -> E[x|z]`` row-wise; required only to evaluate the estimator.
    """
    m = model.dim_x
    cov_xx = np.atleast_2d(check_finite(cov_xx, "cov_xx"))
    cov_xhat = np.atleast_2d(check_finite(cov_xhat, "cov_xhat"))
    if cov_xx.shape != (m, m) or cov_xhat.shape != (m, m):
        raise InvalidInputError(f"covariances must be {m}x{m} to match H")
    if not np.allclose(cov_xx - cov_xhat, (cov_xx - cov_xhat).T, atol=1e-9):
        raise InvalidInputError("cov_xx - cov_xhat must be symmetric")
    n = model.H.shape[0]
    gain = additive_noise_gain(cov_xx, cov_xhat, model.H, model.sigma_u_sq * np.eye(n))
    H = model.H

    def regressor(z):
        if conditional_mean is None:
            raise InvalidInputError("no conditional mean E[x|z] was supplied")
        xz = _rows(conditional_mean(z), "E[x|z]", m)
        return xz, xz @ H.T

    return PartiallyLinearEstimator(gain, regressor, h_matrix=H)


class CellMeanRegressor:
    """Empirical ``(E[x|z], E[y|z])`` for a finite-alphabet ``z``."""

    def __init__(self, x, y, z):
        x = _rows(x, "x")
        y = _rows(y, "y")
        labels = _labels(z)
        cells = {}
        for i, key in enumerate(labels):
            cells.setdefault(key, []).append(i)
        self.x_means = {k: x[idx].mean(axis=0) for k, idx in cells.items()}
        self.y_means = {k: y[idx].mean(axis=0) for k, idx in cells.items()}

    def __call__(self, z):
        labels = _labels(z)
        try:
            xs = np.array([self.x_means[k] for k in labels])
            ys = np.array([self.y_means[k] for k in labels])
        except KeyError as exc:
            raise InvalidInputError(f"z value {exc.args[0]!r} was not seen during fitting") from None
        return xs, ys
