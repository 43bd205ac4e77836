"""Oracle-equivalence suites behind the ``selftest`` command.

Each suite compares a fast closed-form routine with an independent slow
computation and reports the largest discrepancy.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import AdditiveNoiseModel
from .linalg import hadamard_dictionary, pseudo_inverse
from .results import run_rng
from .sparse import SpikeSlabPrior, brute_force_mmse, compute_beta, mmse_denoise, shrink
from .tracking import (
    RecursiveFilterState,
    StateSpaceModel,
    batch_plmmse,
    plmmse_cycle,
    simulate_trajectory,
)

__all__ = ["SuiteResult", "SUITES", "run_suite", "run_selftest", "quadrature_posterior_mean"]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    cases: int
    seconds: float

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"suite {self.name}: {status} max_error={self.max_error:.3e} "
                f"tolerance={self.tolerance:.0e} cases={self.cases} seconds={self.seconds:.2f}")


def _random_rank_matrix(rng, rows, cols, rank):
    if rank == 0:
        return np.zeros((rows, cols))
    a = rng.normal(size=(rows, rank))
    b = rng.normal(size=(rank, cols))
    return a @ b


def penrose_suite(count, seed=0):
    """Largest relative violation of the four Penrose identities."""
    worst = 0.0
    for i in range(count):
        rng = run_rng(seed, 1, i)
        r, c = rng.integers(1, 9, size=2)
        rank = int(rng.integers(0, min(r, c) + 1))
        a = _random_rank_matrix(rng, r, c, rank)
        g = pseudo_inverse(a)
        scale = max(1.0, np.abs(a).max()) * max(1.0, np.abs(g).max())
        errs = (
            np.abs(a @ g @ a - a).max() / max(1.0, np.abs(a).max()),
            np.abs(g @ a @ g - g).max() / max(1.0, np.abs(g).max()),
            np.abs((a @ g) - (a @ g).T).max() / scale,
            np.abs((g @ a) - (g @ a).T).max() / scale,
        )
        worst = max(worst, *errs)
    return worst, count


def quadrature_posterior_mean(z, p, s1, s2, alpha, sigma_v_sq):
    """``E[w | z]`` for ``z = alpha w + n`` by adaptive numerical integration.

    Each mixture component is integrated separately on a window around the
    peak of its integrand, with the log integrand shifted by its peak value
    so that nothing underflows; the components are then combined in log
    space. Zero-variance components are point masses at zero.
    """
    def loglik(w):
        return -0.5 * (z - alpha * w) ** 2 / sigma_v_sq

    log_mass, means = [], []
    for weight, var in ((p, s1), (1.0 - p, s2)):
        if weight == 0:
            continue
        if var == 0:
            log_mass.append(np.log(weight) + loglik(0.0))
            means.append(0.0)
            continue
        # the integrand peaks at `peak` with curvature 1 / spread^2
        # (written without 1 / var, which overflows for subnormal variances)
        spread = np.sqrt(var * sigma_v_sq / (sigma_v_sq + alpha**2 * var))
        peak = spread**2 * alpha * z / sigma_v_sq

        def logf(w, var=var):
            return -0.5 * w * w / var - 0.5 * np.log(2 * np.pi * var) + loglik(w)

        top = logf(peak)

        # integrate in the standardized variable t = (w - peak) / spread
        def g(t, logf=logf, peak=peak, spread=spread, top=top):
            return np.exp(logf(peak + spread * t) - top)

        kw = dict(points=[0.0], limit=200, epsrel=1e-10)
        with warnings.catch_warnings():
            # with a tiny noise variance the integrand carries ~1e-8 relative
            # rounding noise; quadpack flags it although the result is fine
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            den = integrate.quad(g, -40.0, 40.0, epsabs=0.0, **kw)[0]
            # odd about zero to leading order, so bound its error absolutely
            num = integrate.quad(lambda t: t * g(t), -40.0, 40.0, epsabs=1e-13, **kw)[0]
        den *= spread
        num *= spread**2
        log_mass.append(np.log(weight) + top + np.log(den))
        means.append(peak + num / den)
    log_mass = np.array(log_mass)
    post = np.exp(log_mass - log_mass.max())
    return float(np.dot(post, means) / post.sum())


def random_shrinkage_case(rng):
    p = float(rng.uniform(0.02, 0.98))
    s1 = float(rng.uniform(0.5, 20.0))
    s2 = float(rng.choice([0.0, rng.uniform(0.0, 0.5)]))
    alpha = float(rng.choice([1.0, rng.uniform(0.1, 2.0)]))
    sv = float(rng.uniform(0.05, 4.0))
    return p, s1, s2, alpha, sv


def shrinkage_suite(n_params, n_z, seed=0):
    """Closed-form shrinkage against integration, ``n_params * n_z`` pairs."""
    worst = 0.0
    for i in range(n_params):
        rng = run_rng(seed, 2, i)
        p, s1, s2, alpha, sv = random_shrinkage_case(rng)
        prior = SpikeSlabPrior([p], [s1], [s2])
        spread = np.sqrt(alpha**2 * s1 + sv)
        zs = np.linspace(-4 * spread, 4 * spread, n_z)
        fast = shrink(zs, prior, alpha, sv, index=0)
        slow = np.array([quadrature_posterior_mean(z, p, s1, s2, alpha, sv) for z in zs])
        worst = max(worst, float(np.abs(fast - slow).max()))
    return worst, n_params * n_z


def brute_force_suite(dims, draws, seed=0):
    """Coefficient-wise denoiser against the full pattern enumeration."""
    worst = 0.0
    cases = 0
    for j, m in enumerate(dims):
        rng = run_rng(seed, 3, j)
        alpha = float(rng.uniform(0.3, 2.0))
        q, _ = np.linalg.qr(rng.normal(size=(m, m)))
        G = alpha * q
        model = AdditiveNoiseModel(np.eye(m), G, 1.0, float(rng.uniform(0.1, 2.0)))
        prior = SpikeSlabPrior(rng.uniform(0.1, 0.9, m), rng.uniform(0.5, 5.0, m),
                               rng.uniform(0.0, 0.2, m))
        psi = hadamard_dictionary(m) if m & (m - 1) == 0 else np.linalg.qr(rng.normal(size=(m, m)))[0]
        w = prior.sample(draws, rng)
        z = (w @ psi.T) @ G.T + np.sqrt(model.sigma_v_sq) * rng.standard_normal((draws, m))
        fast = mmse_denoise(z, model, prior, psi)
        slow = brute_force_mmse(None, z, model, prior, psi)
        worst = max(worst, float(np.abs(fast - slow).max()))
        cases += draws
    return worst, cases


def random_state_space_model(rng, horizon):
    m = int(rng.integers(2, 5))
    dy = int(rng.integers(1, 3))
    Fs = [0.7 * rng.normal(size=(m, m)) for _ in range(horizon + 1)]
    Bs = [rng.normal(size=(m, 1)) for _ in range(horizon + 1)]
    Hs = [rng.normal(size=(dy, m)) for _ in range(horizon + 1)]
    Gs = [rng.normal(size=(1, m)) for _ in range(horizon + 1)]
    return StateSpaceModel(
        lambda k: Fs[k], lambda k: Bs[k], lambda k: Hs[k], lambda k: Gs[k],
        float(rng.uniform(0.3, 3.0)), float(rng.uniform(0.3, 3.0)),
        float(rng.uniform(0.05, 0.5)), float(rng.uniform(2.0, 20.0)), float(rng.uniform(0.0, 1.0)),
    )


def batch_recursive_suite(n_models, max_horizon=5, seed=0):
    """Recursive filter against the stacked batch estimator, all horizons."""
    worst = 0.0
    cases = 0
    for i in range(n_models):
        rng = run_rng(seed, 4, i)
        model = random_state_space_model(rng, max_horizon)
        stats = compute_beta(model.prior, 1.0, model.sigma_v_sq)
        traj = simulate_trajectory(model, max_horizon, seed=int(rng.integers(2**32)))
        state = RecursiveFilterState.initial(model)
        for h in range(1, max_horizon + 1):
            state, x_pl = plmmse_cycle(state, traj.y[h - 1], traj.z[h - 1], model, stats)
            batch = batch_plmmse(model, traj.y[:h], traj.z[:h], stats)
            scale = max(1.0, float(np.abs(batch[-1]).max()))
            worst = max(worst, float(np.abs(batch[-1] - x_pl).max()) / scale)
            cases += 1
    return worst, cases


SUITES = {
    # name: (runner, quick args, full args, tolerance)
    "penrose": (penrose_suite, (100,), (1000,), 1e-9),
    "shrinkage_quadrature": (shrinkage_suite, (10, 20), (20, 100), 1e-6),
    "brute_force": (brute_force_suite, ((2, 4, 8, 10), 20), ((2, 3, 4, 6, 8, 10, 12), 50), 1e-8),
    "batch_recursive": (batch_recursive_suite, (20,), (100,), 1e-6),
}


def run_suite(name, level="quick", seed=0):
    runner, quick, full, tol = SUITES[name]
    args = quick if level == "quick" else full
    start = time.perf_counter()
    err, cases = runner(*args, seed=seed)
    passed = bool(np.isfinite(err) and err <= tol)
    return SuiteResult(name, passed, float(err), tol, int(cases), time.perf_counter() - start)


def run_selftest(level="quick", seed=0, names=None):
    """Run the suites and return their results in a fixed order."""
    if level not in ("quick", "full"):
        raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
    return [run_suite(n, level, seed) for n in (names or SUITES)]
