"""Dense linear algebra primitives used throughout the package.

Everything here is a pure function of its inputs. Arrays follow the
``(n_samples, n_features)`` convention of scikit-learn wherever samples are
involved.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import hadamard

from ._errors import InsufficientDataError, InvalidInputError

__all__ = [
    "pseudo_inverse",
    "empirical_moments",
    "gaussian_pdf",
    "gaussian_logpdf",
    "hadamard_dictionary",
    "HAAR",
    "DB2",
    "haar_transform",
    "wavelet_transform",
    "wavelet_level_index",
    "check_finite",
]

#: Orthonormal low-pass analysis filters (periodized transform).
HAAR = np.array([1.0, 1.0]) / math.sqrt(2.0)
_S3 = math.sqrt(3.0)
DB2 = np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * math.sqrt(2.0))


def check_finite(a, name="input"):
    """Return ``a`` as a float array, raising if any entry is NaN or inf."""
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _as_2d(a, name):
    arr = check_finite(a, name)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 1-D or 2-D, got ndim={arr.ndim}")
    return arr


def pseudo_inverse(m, tol=0.0):
    """Moore-Penrose pseudo-inverse via the SVD.

    Parameters
    ----------
    m : array_like, shape (r, c)
    tol : float, default 0
        Singular values ``<= tol`` are treated as zero. ``0`` selects
        ``max(r, c) * eps * s_max``.

    Returns
    -------
    ndarray, shape (c, r)
    """
    a = check_finite(m, "matrix")
    if a.ndim != 2:
        raise InvalidInputError("pseudo_inverse expects a 2-D matrix")
    if tol < 0:
        raise InvalidInputError("tol must be nonnegative")
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if tol == 0:
        tol = max(a.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def empirical_moments(x, y):
    """Unbiased sample means and (cross-)covariances of paired samples.

    Parameters
    ----------
    x : array_like, shape (count, dim_x)
    y : array_like, shape (count, dim_y)

    Returns
    -------
    mean_x, mean_y, cov_xx, cov_xy, cov_yy
        Covariances divide by ``count - 1``; the auto-covariances are
        symmetrized.
    """
    x = _as_2d(x, "x")
    y = _as_2d(y, "y")
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError(
            f"sample counts differ: x has {x.shape[0]}, y has {y.shape[0]}"
        )
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least 2 samples for covariances")
    mx = x.mean(axis=0)
    my = y.mean(axis=0)
    xc = x - mx
    yc = y - my
    cxx = xc.T @ xc / (n - 1)
    cxy = xc.T @ yc / (n - 1)
    cyy = yc.T @ yc / (n - 1)
    return mx, my, 0.5 * (cxx + cxx.T), cxy, 0.5 * (cyy + cyy.T)


def gaussian_logpdf(value, mean, variance):
    """Log of the scalar normal density; broadcasts over array inputs."""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise InvalidInputError("variance must be strictly positive")
    d = np.asarray(value, dtype=float) - mean
    return -0.5 * (np.log(2 * np.pi * variance) + d * d / variance)


def gaussian_pdf(value, mean, variance):
    """Scalar normal density ``N(value; mean, variance)``; broadcasts."""
    out = np.exp(gaussian_logpdf(value, mean, variance))
    return float(out) if np.ndim(out) == 0 else out


def hadamard_dictionary(order):
    """Sylvester Hadamard matrix with unit-norm columns."""
    order = int(order)
    if order < 1 or order & (order - 1):
        raise InvalidInputError(f"order must be a power of two, got {order}")
    return hadamard(order).astype(float) / math.sqrt(order)


def _highpass(lowpass):
    n = np.arange(lowpass.size)
    return ((-1.0) ** n) * lowpass[::-1]


def _analysis(x, h, g):
    n = x.shape[-1]
    half = n // 2
    a = np.zeros(x.shape[:-1] + (half,))
    d = np.zeros_like(a)
    base = 2 * np.arange(half)
    for k in range(h.size):
        xs = x[..., (base + k) % n]
        a += h[k] * xs
        d += g[k] * xs
    return a, d


def _synthesis(a, d, h, g):
    half = a.shape[-1]
    n = 2 * half
    x = np.zeros(a.shape[:-1] + (n,))
    base = 2 * np.arange(half)
    for k in range(h.size):
        idx = (base + k) % n
        # np.add.at handles repeated indices when the filter exceeds n
        np.add.at(x, (..., idx), h[k] * a + g[k] * d)
    return x


def wavelet_transform(signal, levels, inverse=False, lowpass=HAAR):
    """Periodized orthonormal discrete wavelet transform along the last axis.

    Coefficients are laid out as ``[a_L, d_L, d_{L-1}, ..., d_1]`` where
    ``d_1`` holds the finest details.

    Parameters
    ----------
    signal : array_like, shape (..., n)
        ``n`` must be divisible by ``2**levels``.
    levels : int
    inverse : bool
        Apply the synthesis (inverse) transform to a coefficient vector.
    lowpass : array_like
        Orthonormal low-pass filter; Haar by default.
    """
    x = check_finite(signal, "signal")
    levels = int(levels)
    if levels < 1:
        raise InvalidInputError("levels must be a positive integer")
    n = x.shape[-1]
    if n % (2**levels):
        raise InvalidInputError(
            f"signal length {n} is not divisible by 2**{levels}"
        )
    h = np.asarray(lowpass, dtype=float)
    g = _highpass(h)
    if not inverse:
        out = x.copy()
        length = n
        for _ in range(levels):
            a, d = _analysis(out[..., :length], h, g)
            out[..., : length // 2] = a
            out[..., length // 2 : length] = d
            length //= 2
        return out
    out = x.copy()
    length = n >> levels
    for _ in range(levels):
        rec = _synthesis(out[..., :length], out[..., length : 2 * length], h, g)
        out[..., : 2 * length] = rec
        length *= 2
    return out


def haar_transform(signal, levels, inverse=False):
    """Orthonormal multi-level Haar transform (see :func:`wavelet_transform`)."""
    return wavelet_transform(signal, levels, inverse=inverse, lowpass=HAAR)


def wavelet_level_index(n, levels):
    """Group label of every coefficient in the ``wavelet_transform`` layout.

    ``0`` marks the approximation band and ``l`` (1..levels) marks the detail
    band at level ``l``, with level 1 the finest.
    """
    if n % (2**levels):
        raise InvalidInputError(f"length {n} is not divisible by 2**{levels}")
    idx = np.empty(n, dtype=int)
    coarse = n >> levels
    idx[:coarse] = 0
    start = coarse
    for level in range(levels, 0, -1):
        width = n >> level
        idx[start : start + width] = level
        start += width
    return idx
