"""Test distributions with a closed-form MMSE estimator.

:class:`DiscreteZMixture` draws a discrete ``z`` and, given ``z``, a
Gaussian mixture for ``(x, y)``. The posterior mean ``E[x | y, z]`` is then
exact, which makes it an oracle for the MMSE ordering checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._errors import InvalidInputError

__all__ = ["DiscreteZMixture"]


@dataclass
class DiscreteZMixture:
    """``z`` uniform on ``0..n_cells-1``; ``(x, y) | z`` a Gaussian mixture.

    Attributes hold per-(cell, component) weights, means and covariances of
    the stacked vector ``(x, y)``.
    """

    dim_x: int
    dim_y: int
    z_probs: np.ndarray
    weights: np.ndarray  # (cells, comps)
    means: np.ndarray  # (cells, comps, dx + dy)
    covs: np.ndarray  # (cells, comps, d, d)

    @classmethod
    def random(cls, rng, dim_x=2, dim_y=2, n_cells=3, n_comps=2, spread=2.0):
        d = dim_x + dim_y
        z_probs = rng.dirichlet(np.full(n_cells, 5.0))
        weights = rng.dirichlet(np.full(n_comps, 2.0), size=n_cells)
        means = spread * rng.normal(size=(n_cells, n_comps, d))
        a = rng.normal(size=(n_cells, n_comps, d, d))
        covs = a @ np.swapaxes(a, -1, -2) / d + 0.2 * np.eye(d)
        return cls(dim_x, dim_y, z_probs, weights, means, covs)

    @property
    def n_cells(self):
        return self.z_probs.size

    def sample(self, count, rng):
        count = int(count)
        if count < 1:
            raise InvalidInputError("count must be at least 1")
        z = rng.choice(self.n_cells, size=count, p=self.z_probs)
        u = rng.random(count)
        cum = np.cumsum(self.weights[z], axis=1)
        comp = np.minimum((u[:, None] > cum).sum(axis=1), self.weights.shape[1] - 1)
        chol = np.linalg.cholesky(self.covs)
        noise = rng.standard_normal((count, self.dim_x + self.dim_y))
        xy = self.means[z, comp] + np.einsum("nij,nj->ni", chol[z, comp], noise)
        return xy[:, : self.dim_x], xy[:, self.dim_x :], z.astype(float)

    def posterior_mean(self, y, z):
        """Exact ``E[x | y, z]``."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        z = np.asarray(z).astype(int).ravel()
        dx = self.dim_x
        out = np.empty((y.shape[0], dx))
        for c in range(self.n_cells):
            idx = np.flatnonzero(z == c)
            if idx.size == 0:
                continue
            yy = y[idx]
            logw, cond = [], []
            for j in range(self.weights.shape[1]):
                mu, cov = self.means[c, j], self.covs[c, j]
                syy = cov[dx:, dx:]
                sxy = cov[:dx, dx:]
                r = yy - mu[dx:]
                sol = np.linalg.solve(syy, r.T).T
                _, logdet = np.linalg.slogdet(syy)
                logw.append(np.log(self.weights[c, j]) - 0.5 * (np.sum(r * sol, axis=1) + logdet))
                cond.append(mu[:dx] + sol @ sxy.T)
            logw = np.array(logw)
            post = np.exp(logw - logsumexp(logw, axis=0))
            out[idx] = np.einsum("jn,jnd->nd", post, np.array(cond))
        return out

    def conditional_means(self, z):
        """``(E[x|z], E[y|z])`` row-wise."""
        z = np.asarray(z).astype(int).ravel()
        m = np.einsum("cj,cjd->cd", self.weights, self.means)
        return m[z, : self.dim_x], m[z, self.dim_x :]
