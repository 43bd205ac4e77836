"""Spike-and-slab shrinkage and the sparse PLMMSE estimator.

The signal is ``x = Psi w`` with a unitary dictionary ``Psi`` and
independent coefficients ``w_i = s_i b_i``, where ``b_i ~ N(0, 1)`` and
``s_i`` equals ``sigma1_i`` with probability ``p_i`` and ``sigma2_i``
otherwise. When ``G`` is orthogonal, ``E[x|z]`` reduces to a scalar
shrinkage of each dictionary coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermitenorm

from ._errors import InvalidInputError, SizeLimitError
from .core import AdditiveNoiseModel, additive_noise_gain
from .linalg import check_finite, hadamard_dictionary, pseudo_inverse
from .results import ResultTable, mean_and_se, run_rng

__all__ = [
    "SpikeSlabPrior",
    "ShrinkageStatistics",
    "shrink",
    "mmse_denoise",
    "compute_beta",
    "sparse_plmmse_gain",
    "sparse_plmmse_estimate",
    "brute_force_mmse",
    "circulant_blur",
    "sparse_experiment",
    "MAX_ENUMERATION_DIM",
]

MAX_ENUMERATION_DIM = 16


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Per-coefficient two-level scale mixture."""

    p: np.ndarray
    sigma1_sq: np.ndarray
    sigma2_sq: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(check_finite(self.p, "p"))
        s1 = np.atleast_1d(check_finite(self.sigma1_sq, "sigma1_sq"))
        s2 = np.atleast_1d(check_finite(self.sigma2_sq, "sigma2_sq"))
        m = max(p.size, s1.size, s2.size)
        p, s1, s2 = (np.broadcast_to(a, (m,)).astype(float) for a in (p, s1, s2))
        if np.any((p < 0) | (p > 1)):
            raise InvalidInputError("p must lie in [0, 1]")
        if np.any(s1 < 0) or np.any(s2 < 0):
            raise InvalidInputError("slab variances must be nonnegative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "sigma1_sq", s1)
        object.__setattr__(self, "sigma2_sq", s2)

    @classmethod
    def homogeneous(cls, dim, p, sigma1_sq, sigma2_sq=0.0):
        return cls(np.full(dim, p), np.full(dim, sigma1_sq), np.full(dim, sigma2_sq))

    @property
    def dim(self):
        return self.p.size

    @property
    def variance(self):
        """Marginal coefficient variances ``p s1 + (1 - p) s2``."""
        return self.p * self.sigma1_sq + (1 - self.p) * self.sigma2_sq

    @property
    def is_homogeneous(self):
        return all(np.all(a == a[0]) for a in (self.p, self.sigma1_sq, self.sigma2_sq))

    def sample(self, size, rng):
        """Draw ``size`` coefficient vectors, shape ``(size, dim)``."""
        on = rng.random((size, self.dim)) < self.p
        scale = np.sqrt(np.where(on, self.sigma1_sq, self.sigma2_sq))
        return scale * rng.standard_normal((size, self.dim))


@dataclass(frozen=True)
class ShrinkageStatistics:
    """Variances ``beta_i`` of the shrunken coefficients and prior variances."""

    beta: np.ndarray
    sigma_w_sq: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        sw = np.atleast_1d(np.asarray(self.sigma_w_sq, dtype=float))
        if beta.shape != sw.shape:
            raise InvalidInputError("beta and sigma_w_sq must have equal length")
        if np.any(beta < 0) or np.any(beta > sw + 1e-9 * np.maximum(1.0, sw)):
            raise InvalidInputError("beta must lie in [0, sigma_w_sq]")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma_w_sq", sw)

    @property
    def residual(self):
        """``sigma_w_sq - beta``: linear information left for ``y``."""
        return np.maximum(self.sigma_w_sq - self.beta, 0.0)


def _component_logpdf(z, var):
    return -0.5 * (np.log(2 * np.pi * var) + z * z / var)


def shrink(z_tilde, prior, alpha, sigma_v_sq, index=None):
    """Posterior mean ``E[w_i | z_tilde_i]`` of a spike-and-slab coefficient.

    Parameters
    ----------
    z_tilde : float or array_like
        Observed coefficient(s) ``alpha * w_i + n_i`` with
        ``n_i ~ N(0, sigma_v_sq)``. Without ``index`` the last axis runs over
        the coefficients of ``prior``.
    prior : SpikeSlabPrior
    alpha : float
    sigma_v_sq : float
    index : int, optional
        Use the parameters of coefficient ``index`` for every entry.
    """
    if sigma_v_sq <= 0:
        raise InvalidInputError("sigma_v_sq must be strictly positive")
    z = check_finite(z_tilde, "z_tilde")
    if index is None:
        p, s1, s2 = prior.p, prior.sigma1_sq, prior.sigma2_sq
    else:
        p, s1, s2 = prior.p[index], prior.sigma1_sq[index], prior.sigma2_sq[index]
    a2 = alpha * alpha
    v1 = a2 * s1 + sigma_v_sq
    v2 = a2 * s2 + sigma_v_sq
    with np.errstate(divide="ignore"):
        l1 = np.log(p) + _component_logpdf(z, v1)
        l2 = np.log1p(-p) + _component_logpdf(z, v2)
    w1 = np.exp(l1 - np.logaddexp(l1, l2))
    out = z * (w1 * (alpha * s1 / v1) + (1.0 - w1) * (alpha * s2 / v2))
    return float(out) if np.ndim(out) == 0 else out


def _check_dictionary(psi, dim, tol=1e-9):
    psi = np.atleast_2d(check_finite(psi, "dictionary"))
    if psi.shape != (dim, dim):
        raise InvalidInputError(f"dictionary must be {dim}x{dim}")
    dev = np.abs(psi.T @ psi - np.eye(dim)).max()
    if dev > tol:
        raise InvalidInputError(f"dictionary is not orthonormal (deviation {dev:.3g})")
    return psi


def mmse_denoise(z, model, prior, psi):
    """``E[x|z] = Psi f(Psi^T G^T z / alpha)`` for an orthogonal ``G``.

    ``z`` may be a single vector or an ``(n, Q)`` array of observations.
    """
    model.check_orthogonal()
    psi = _check_dictionary(psi, model.dim_x)
    z = check_finite(z, "z")
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    z_tilde = (z2 @ model.G) @ psi / model.alpha
    x = shrink(z_tilde, prior, model.alpha, model.sigma_v_sq) @ psi.T
    return x[0] if single else x


def _unique_params(prior):
    keys = np.stack([prior.p, prior.sigma1_sq, prior.sigma2_sq], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    return uniq, np.asarray(inverse).ravel()


def compute_beta(prior, alpha, sigma_v_sq, method="quadrature", budget=512, rng=None):
    """Variance of the shrunken coefficient ``f(z_tilde_i)`` for every ``i``.

    ``z_tilde_i`` follows the two-component zero-mean mixture with variances
    ``alpha^2 sigma_j^2 + sigma_v_sq``. Because ``f`` is odd, the variance
    equals ``E[f^2]``.

    Parameters
    ----------
    method : {"quadrature", "monte-carlo"}
        Gauss-Hermite quadrature per mixture component, or plain sampling.
    budget : int
        Quadrature nodes (>= 128) or Monte Carlo draws (>= 1e5).
    """
    if sigma_v_sq <= 0:
        raise InvalidInputError("sigma_v_sq must be strictly positive")
    uniq, inverse = _unique_params(prior)
    a2 = alpha * alpha
    betas = np.empty(uniq.shape[0])
    if method == "quadrature":
        if budget < 128:
            raise InvalidInputError("quadrature needs at least 128 nodes")
        t, w = roots_hermitenorm(int(budget))
        w = w / math.sqrt(2 * math.pi)
        for k, (p, s1, s2) in enumerate(uniq):
            one = SpikeSlabPrior([p], [s1], [s2])
            total = 0.0
            for weight, s in ((p, s1), (1 - p, s2)):
                if weight == 0:
                    continue
                zz = math.sqrt(a2 * s + sigma_v_sq) * t
                total += weight * np.sum(w * shrink(zz, one, alpha, sigma_v_sq, index=0) ** 2)
            betas[k] = total
    elif method == "monte-carlo":
        if budget < 100_000:
            raise InvalidInputError("Monte Carlo needs at least 1e5 draws")
        rng = np.random.default_rng(rng)
        for k, (p, s1, s2) in enumerate(uniq):
            one = SpikeSlabPrior([p], [s1], [s2])
            w_draw = one.sample(int(budget), rng)[:, 0]
            zz = alpha * w_draw + math.sqrt(sigma_v_sq) * rng.standard_normal(int(budget))
            betas[k] = np.mean(shrink(zz, one, alpha, sigma_v_sq, index=0) ** 2)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    sw = prior.variance
    beta = np.minimum(betas[inverse], sw)
    return ShrinkageStatistics(beta, sw)


def sparse_plmmse_gain(model, prior, stats, psi, homogeneous=False):
    """Gain ``A`` of the sparse PLMMSE estimator ``A y + (I - A H) E[x|z]``.

    The general form is
    ``Psi D Psi^T H^T pinv(H Psi D Psi^T H^T + sigma_u^2 I)`` with
    ``D = diag(sigma_w^2 - beta)``. With ``homogeneous=True`` the dictionary
    drops out: ``A = H^T pinv(H H^T + sigma_u^2 / d I)`` with the scalar
    ``d = sigma_w^2 - beta``.
    """
    m = model.dim_x
    if stats.beta.size != m or prior.dim != m:
        raise InvalidInputError("prior/statistics dimension does not match the model")
    H = model.H
    n = H.shape[0]
    if homogeneous:
        if not (prior.is_homogeneous and np.all(stats.beta == stats.beta[0])):
            raise InvalidInputError("homogeneous gain requested for heterogeneous parameters")
        d = float(stats.residual[0])
        if d <= 0:
            return np.zeros((m, n))
        return H.T @ pseudo_inverse(H @ H.T + (model.sigma_u_sq / d) * np.eye(n))
    psi = _check_dictionary(psi, m)
    d = (psi * stats.residual) @ psi.T
    return additive_noise_gain(d, np.zeros_like(d), H, model.sigma_u_sq * np.eye(n))


def sparse_plmmse_estimate(y, z, model, prior, psi, gain):
    """Apply ``A y + (I - A H) E[x|z]`` row-wise."""
    xz = np.atleast_2d(mmse_denoise(z, model, prior, psi))
    y2 = np.atleast_2d(check_finite(y, "y"))
    out = xz + (y2 - xz @ model.H.T) @ gain.T
    return out[0] if np.ndim(y) == 1 else out


def brute_force_mmse(y, z, model, prior, psi, return_weights=False, chunk=2048):
    """Exact ``E[x | y, z]`` by enumerating all ``2**M`` support patterns.

    Pass ``y=None`` to condition on ``z`` alone. Observations may be single
    vectors or ``(n, .)`` arrays.

    Returns
    -------
    x_hat : ndarray
    weights : ndarray, shape (n, 2**M)
        Posterior pattern probabilities (only with ``return_weights``); bit
        ``i`` of the pattern index is set when coefficient ``i`` uses
        ``sigma1``.
    """
    m = model.dim_x
    if m > MAX_ENUMERATION_DIM:
        raise SizeLimitError(
            f"enumeration over 2**{m} patterns exceeds the M <= {MAX_ENUMERATION_DIM} guard"
        )
    psi = _check_dictionary(psi, m)
    z = check_finite(z, "z")
    single = z.ndim == 1
    blocks, noise = [np.atleast_2d(z)], [np.full(model.G.shape[0], model.sigma_v_sq)]
    mats = [model.G]
    if y is not None:
        y = check_finite(y, "y")
        blocks.insert(0, np.atleast_2d(y))
        noise.insert(0, np.full(model.H.shape[0], model.sigma_u_sq))
        mats.insert(0, model.H)
    obs = np.hstack(blocks)
    K = np.vstack(mats) @ psi
    R = np.diag(np.concatenate(noise))
    n_obs, dim = obs.shape
    with np.errstate(divide="ignore"):
        log_p = np.log(prior.p)
        log_q = np.log1p(-prior.p)

    run_max = np.full(n_obs, -np.inf)
    acc = np.zeros((n_obs, m))
    tot = np.zeros(n_obs)
    all_ll = [] if return_weights else None
    total = 1 << m
    bit = np.arange(m)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        bits = ((idx[:, None] >> bit) & 1).astype(bool)
        lprior = np.where(bits, log_p, log_q).sum(axis=1)
        d = np.where(bits, prior.sigma1_sq, prior.sigma2_sq)
        S = (K[None, :, :] * d[:, None, :]) @ K.T + R
        L = np.linalg.cholesky(S)
        logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        # explicit inverse: one factorization per pattern, shared by all observations
        sol = np.linalg.inv(S) @ obs.T
        quad = np.einsum("nd,pdn->pn", obs, sol)
        ll = lprior[:, None] - 0.5 * (logdet[:, None] + quad + dim * math.log(2 * math.pi))
        # posterior mean of w under each pattern: D K^T S^{-1} o
        w_mean = d[:, :, None] * np.matmul(K.T[None, :, :], sol)
        if return_weights:
            all_ll.append(ll)
        cmax = ll.max(axis=0)
        new_max = np.maximum(run_max, cmax)
        finite = np.isfinite(new_max)
        scale = np.where(finite, np.exp(np.where(finite, run_max - new_max, 0.0)), 0.0)
        wts = np.exp(ll - np.where(finite, new_max, 0.0)[None, :])
        acc = acc * scale[:, None] + np.einsum("pn,pkn->nk", wts, w_mean, optimize=True)
        tot = tot * scale + wts.sum(axis=0)
        run_max = new_max
    x_hat = (acc / tot[:, None]) @ psi.T
    if single:
        x_hat = x_hat[0]
    if not return_weights:
        return x_hat
    ll = np.concatenate(all_ll, axis=0).T
    weights = np.exp(ll - ll.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    return x_hat, (weights[0] if single else weights)


def circulant_blur(kernel):
    """Circulant matrix whose first column is ``kernel`` (circular convolution)."""
    k = np.asarray(kernel, dtype=float)
    n = k.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return k[idx]


def exponential_kernel(dim, decay):
    """``h[n] = exp(-|n| / decay)`` with ``|n|`` the circular distance."""
    n = np.arange(dim)
    dist = np.minimum(n, dim - n)
    return np.exp(-dist / decay)


def _dictionary(kind, dim):
    if kind == "hadamard":
        return hadamard_dictionary(dim)
    if kind == "identity":
        return np.eye(dim)
    if kind == "dct":
        from scipy.fft import dct

        return dct(np.eye(dim), norm="ortho", axis=0).T
    raise InvalidInputError(f"unknown dictionary {kind!r}")


def sparse_experiment(
    m=64,
    p=0.5,
    sigma1_sq=1.0,
    sigma2_sq=0.0,
    kernel_decay=8.5,
    column_norm=0.99,
    g_scale=0.01,
    snr_grid=(-5.0, 0.0, 5.0, 10.0, 15.0, 20.0),
    mc_count=200,
    seed=0,
    sigma_v2_scale=None,
    dictionary="hadamard",
    blur="exponential",
):
    """MSE of ``E[x|z]``, the LMMSE of ``x`` from ``y``, sparse PLMMSE and
    (for ``m <= 16``) the exact MMSE over an input-SNR sweep.

    Input SNR is ``10 log10(p sigma1_sq / sigma^2)``; ``sigma^2`` is used as
    the ``y``-channel noise variance, and ``sigma_v2_scale * sigma^2`` as the
    ``z``-channel noise variance (default scale ``g_scale**2``, which makes
    the per-coefficient SNR of ``z`` equal the input SNR). The same signal
    and unit-noise draws are reused across SNR points. MSE is per coefficient.
    """
    m = int(m)
    mc_count = int(mc_count)
    snr_grid = np.atleast_1d(np.asarray(snr_grid, dtype=float))
    if snr_grid.size == 0 or not np.all(np.isfinite(snr_grid)):
        raise InvalidInputError("SNR grid must be a non-empty list of finite values")
    if mc_count < 2:
        raise InvalidInputError("mc_count must be at least 2")
    if p * sigma1_sq <= 0:
        raise InvalidInputError("p * sigma1_sq must be positive to define the SNR")
    if sigma_v2_scale is None:
        sigma_v2_scale = g_scale**2
    psi = _dictionary(dictionary, m)
    if blur == "exponential":
        H = circulant_blur(exponential_kernel(m, kernel_decay))
        H *= column_norm / np.linalg.norm(H, axis=0)
    elif blur == "identity":
        H = column_norm * np.eye(m)
    else:
        raise InvalidInputError(f"unknown blur {blur!r}")
    G = g_scale * np.eye(m)
    prior = SpikeSlabPrior.homogeneous(m, p, sigma1_sq, sigma2_sq)

    rng = run_rng(seed, 0)
    w = prior.sample(mc_count, rng)
    x = w @ psi.T
    unit_u = rng.standard_normal((mc_count, m))
    unit_v = rng.standard_normal((mc_count, m))
    cov_xx = (psi * prior.variance) @ psi.T
    with_mmse = m <= MAX_ENUMERATION_DIM

    rows = []
    runs = {k: [] for k in ("mse_z_nl", "mse_y_l", "mse_pl", "mse_mmse")}
    for snr in snr_grid:
        sigma2 = p * sigma1_sq / 10 ** (snr / 10)
        model = AdditiveNoiseModel(H, G, sigma2, sigma_v2_scale * sigma2, alpha=g_scale)
        y = x @ H.T + math.sqrt(model.sigma_u_sq) * unit_u
        z = x @ G.T + math.sqrt(model.sigma_v_sq) * unit_v
        stats = compute_beta(prior, model.alpha, model.sigma_v_sq)
        gain = sparse_plmmse_gain(model, prior, stats, psi, homogeneous=prior.is_homogeneous)
        x_z = mmse_denoise(z, model, prior, psi)
        a_lin = additive_noise_gain(cov_xx, np.zeros_like(cov_xx), H, model.sigma_u_sq * np.eye(m))
        x_y = y @ a_lin.T
        x_pl = x_z + (y - x_z @ H.T) @ gain.T
        errs = {
            "mse_z_nl": np.mean((x_z - x) ** 2, axis=1),
            "mse_y_l": np.mean((x_y - x) ** 2, axis=1),
            "mse_pl": np.mean((x_pl - x) ** 2, axis=1),
        }
        if with_mmse:
            x_mm = brute_force_mmse(y, z, model, prior, psi)
            errs["mse_mmse"] = np.mean((x_mm - x) ** 2, axis=1)
        else:
            errs["mse_mmse"] = np.full(mc_count, np.nan)
        row = [snr, model.sigma_u_sq, model.sigma_v_sq]
        for key in ("mse_z_nl", "mse_y_l", "mse_pl", "mse_mmse"):
            row.extend(mean_and_se(errs[key]))
            runs[key].append(errs[key])
        best = "mse_z_nl" if errs["mse_z_nl"].mean() < errs["mse_y_l"].mean() else "mse_y_l"
        row.extend(mean_and_se(errs["mse_pl"] - errs[best]))
        row.extend(mean_and_se(errs["mse_pl"] - errs["mse_mmse"]))
        row.append(float(np.mean(stats.beta)))
        rows.append(row)

    columns = ["snr_db", "sigma_u2", "sigma_v2"]
    for key in ("mse_z_nl", "mse_y_l", "mse_pl", "mse_mmse"):
        columns += [key, key + "_se"]
    columns += ["pl_minus_best", "pl_minus_best_se", "pl_minus_mmse", "pl_minus_mmse_se", "beta"]
    meta = {
        "experiment": "sparse",
        "seed": seed,
        "mc_count": mc_count,
        "m": m,
        "p": float(p),
        "sigma1_sq": float(sigma1_sq),
        "sigma2_sq": float(sigma2_sq),
        "kernel_decay": float(kernel_decay),
        "column_norm": float(column_norm),
        "g_scale": float(g_scale),
        "sigma_v2_scale": float(sigma_v2_scale),
        "dictionary": dictionary,
        "blur": blur,
    }
    table = ResultTable(columns, np.array(rows), meta)
    table.runs = {k: np.array(v) for k, v in runs.items()}
    return table
