"""Recursive PLMMSE, Kalman and IMM filters for a linear state-space model.

The model is

    X(k+1) = F_k X(k) + B_k W(k),   X(0) = 0,
    Y(k)   = H_k X(k) + U(k),
    Z(k)   = G_k X(k) + V(k),

with a scalar spike-and-slab drive ``W(k)``. When ``E[W(k-1) | Z(1..n)]``
only depends on ``Z(k)``, the conditional mean ``E[X|Z]`` is a simple
recursion and the linear part of the PLMMSE estimator is a Kalman filter on
the innovation ``Y(k) - H_k E[X(k)|Z]`` with inflated observation noise.

Filters are written for a batch of independent runs: state vectors have
shape ``(runs, M)``. Gains of the Kalman and PLMMSE filters do not depend on
the data and are shared by all runs; the IMM keeps per-run covariances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core
from ._errors import InvalidConfigurationError, InvalidInputError, InvalidStateError
from .linalg import check_finite, pseudo_inverse
from .results import ResultTable, mean_and_se, run_rng, worker_count
from .sparse import SpikeSlabPrior, compute_beta, shrink

__all__ = [
    "StateSpaceModel",
    "white_acceleration_model",
    "Trajectory",
    "simulate_trajectories",
    "simulate_trajectory",
    "KalmanState",
    "kalman_step",
    "RecursiveFilterState",
    "plmmse_cycle",
    "ImmState",
    "imm_step",
    "default_transition",
    "drive_matrix",
    "batch_plmmse",
    "batch_lmmse",
    "run_filters",
    "tracking_experiment",
]

_PSD_TOL = 1e-9


def _matrix_source(value, name):
    if callable(value):
        return value
    arr = np.atleast_2d(check_finite(value, name))
    return lambda k: arr


@dataclass(frozen=True)
class StateSpaceModel:
    """Linear state-space model with a scalar spike-and-slab drive.

    ``F``, ``B``, ``H`` and ``G`` are constant arrays or callables
    ``k -> array``. ``F_k`` and ``B_k`` are used for ``k = 0, ..., n-1``;
    ``H_k`` and ``G_k`` for ``k = 1, ..., n``. ``B_k`` is a column (the drive
    is scalar). The drive has ``P(S_k = sigma1) = p``.
    """

    F: object
    B: object
    H: object
    G: object
    sigma_u_sq: float
    sigma_v_sq: float
    p: float
    sigma1_sq: float
    sigma2_sq: float

    def __post_init__(self):
        for name in ("sigma_u_sq", "sigma_v_sq"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be strictly positive")
        if not 0 <= self.p <= 1:
            raise InvalidInputError("p must lie in [0, 1]")
        if self.sigma1_sq < 0 or self.sigma2_sq < 0:
            raise InvalidInputError("drive variances must be nonnegative")
        for name in ("F", "B", "H", "G"):
            object.__setattr__(self, "_" + name, _matrix_source(getattr(self, name), name))
        f0, b0, h1, g1 = self.F_at(0), self.B_at(0), self.H_at(1), self.G_at(1)
        m = f0.shape[0]
        if f0.shape != (m, m) or b0.shape != (m, 1) or h1.shape[1] != m or g1.shape[1] != m:
            raise InvalidInputError("F, B, H and G dimensions do not chain")

    def F_at(self, k):
        return self._F(k)

    def B_at(self, k):
        return np.asarray(self._B(k), dtype=float).reshape(-1, 1)

    def H_at(self, k):
        return self._H(k)

    def G_at(self, k):
        return self._G(k)

    @property
    def dim(self):
        return self.F_at(0).shape[0]

    @property
    def prior(self):
        return SpikeSlabPrior([self.p], [self.sigma1_sq], [self.sigma2_sq])

    @property
    def sigma_w_sq(self):
        # direct mixture variance; building the prior here is hot in the filters
        return self.p * self.sigma1_sq + (1.0 - self.p) * self.sigma2_sq

    def w_given_z(self, z):
        """``E[W(k-1) | Z(k)]``, assuming ``Z(k) = W(k-1) + V(k)``."""
        return shrink(np.asarray(z, dtype=float), self.prior, 1.0, self.sigma_v_sq, index=0)

    def shrinkage_stats(self, method="quadrature"):
        return compute_beta(self.prior, 1.0, self.sigma_v_sq, method=method)


def white_acceleration_model(sigma_u_sq=25.0, sigma_v_sq=1.0, p=0.05, sigma1_sq=100.0, sigma2_sq=1.0):
    """Position-history state ``(P(k), P(k-1), P(k-2))`` driven by acceleration.

    Position is observed through ``H`` and acceleration through ``G``, which
    satisfies ``G F = 0`` and ``G B = 1`` so that ``Z(k) = W(k-1) + V(k)``.
    """
    F = np.array([[2.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    B = np.array([[1.0], [0.0], [0.0]])
    H = np.array([[1.0, 0.0, 0.0]])
    G = np.array([[1.0, -2.0, 1.0]])
    return StateSpaceModel(F, B, H, G, sigma_u_sq, sigma_v_sq, p, sigma1_sq, sigma2_sq)


@dataclass
class Trajectory:
    """Ground truth and observations; leading axis runs over runs.

    ``states[:, k-1]`` is ``X(k)`` and ``w[:, k]`` is ``W(k)``, so the
    observation pair ``(y[:, k-1], z[:, k-1])`` is taken at time ``k``.
    """

    states: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    maneuver: np.ndarray

    @property
    def steps(self):
        return self.states.shape[1]


def _u_noise(rng, shape, sigma_u_sq, family, outlier_prob, outlier_scale):
    if family == "gaussian":
        return np.sqrt(sigma_u_sq) * rng.standard_normal(shape)
    if family == "mixture":
        if not (0 < outlier_prob < 1 and outlier_prob * outlier_scale < 1):
            raise InvalidInputError("need 0 < outlier_prob < 1 and outlier_prob*outlier_scale < 1")
        # nominal variance chosen so the mixture keeps the variance sigma_u_sq
        nominal = (1.0 - outlier_prob * outlier_scale) / (1.0 - outlier_prob)
        out = rng.random(shape) < outlier_prob
        scale = np.sqrt(sigma_u_sq * np.where(out, outlier_scale, nominal))
        return scale * rng.standard_normal(shape)
    raise InvalidInputError(f"unknown U noise family {family!r}")


def simulate_trajectories(model, steps, runs, seed=0, u_family="gaussian",
                          outlier_prob=0.1, outlier_scale=5.0, keys=()):
    """Simulate ``runs`` independent trajectories of ``steps`` observations.

    Run ``r`` draws from its own stream ``run_rng(seed, *keys, r)``, so
    trajectories do not depend on ``runs``. ``u_family="mixture"`` draws
    ``U`` from a zero-mean two-component Gaussian mixture with outlier
    probability ``outlier_prob`` and outlier variance
    ``outlier_scale * sigma_u_sq``, matched to the Gaussian variance.
    """
    steps, runs = int(steps), int(runs)
    if steps < 1 or runs < 1:
        raise InvalidInputError("steps and runs must be at least 1")
    m = model.dim
    dy = model.H_at(1).shape[0]
    dz = model.G_at(1).shape[0]
    s1, s2 = np.sqrt(model.sigma1_sq), np.sqrt(model.sigma2_sq)
    w = np.empty((runs, steps))
    man = np.empty((runs, steps), dtype=bool)
    u = np.empty((runs, steps, dy))
    v = np.empty((runs, steps, dz))
    for r in range(runs):
        rng = run_rng(seed, *keys, r)
        man[r] = rng.random(steps) < model.p
        w[r] = np.where(man[r], s1, s2) * rng.standard_normal(steps)
        u[r] = _u_noise(rng, (steps, dy), model.sigma_u_sq, u_family, outlier_prob, outlier_scale)
        v[r] = np.sqrt(model.sigma_v_sq) * rng.standard_normal((steps, dz))
    states = np.empty((runs, steps, m))
    y = np.empty((runs, steps, dy))
    z = np.empty((runs, steps, dz))
    x = np.zeros((runs, m))
    for k in range(1, steps + 1):
        x = x @ model.F_at(k - 1).T + w[:, k - 1, None] * model.B_at(k - 1)[:, 0]
        states[:, k - 1] = x
        y[:, k - 1] = x @ model.H_at(k).T + u[:, k - 1]
        z[:, k - 1] = x @ model.G_at(k).T + v[:, k - 1]
    return Trajectory(states, y, z, w, man)


def simulate_trajectory(model, steps, seed=0, **kwargs):
    """Single-run view of :func:`simulate_trajectories`."""
    t = simulate_trajectories(model, steps, 1, seed, **kwargs)
    return Trajectory(t.states[0], t.y[0], t.z[0], t.w[0], t.maneuver[0])


# ---------------------------------------------------------------- Kalman core


def _check_psd(p, name="P"):
    p = np.asarray(p, dtype=float)
    if not np.allclose(p, np.swapaxes(p, -1, -2), atol=_PSD_TOL * max(1.0, np.abs(p).max())):
        raise InvalidStateError(f"{name} is not symmetric")
    lo = np.linalg.eigvalsh(0.5 * (p + np.swapaxes(p, -1, -2))).min()
    if lo < -_PSD_TOL * max(1.0, np.abs(p).max()):
        raise InvalidStateError(f"{name} is not PSD (min eigenvalue {lo:.3g})")


def _predict_cov(P, F, B, q):
    return F @ P @ F.T + q * (B @ B.T)


def _gain(P_pred, C, R):
    S = C @ P_pred @ C.T + R
    K = P_pred @ C.T @ pseudo_inverse(S)
    P = P_pred - K @ S @ K.T
    return K, 0.5 * (P + P.T)


def _obs_matrix(model, k, with_z):
    H = model.H_at(k)
    if not with_z:
        return H
    return np.vstack([H, model.G_at(k)])


def _obs_noise(model, k, inflation, with_z):
    dy = model.H_at(k).shape[0]
    r = [model.sigma_u_sq * inflation] * dy
    if with_z:
        r += [model.sigma_v_sq] * model.G_at(k).shape[0]
    return np.diag(r)


def gain_sequence(model, steps, inflation=1.0, with_z=False):
    """Kalman gains ``K_1..K_n`` and filtered covariances from ``P_0 = 0``."""
    m = model.dim
    P = np.zeros((m, m))
    gains, covs = [], []
    for k in range(1, int(steps) + 1):
        P_pred = _predict_cov(P, model.F_at(k - 1), model.B_at(k - 1), model.sigma_w_sq)
        K, P = _gain(P_pred, _obs_matrix(model, k, with_z), _obs_noise(model, k, inflation, with_z))
        gains.append(K)
        covs.append(P)
    return gains, covs


@dataclass
class KalmanState:
    x: np.ndarray
    P: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, model):
        m = model.dim
        return cls(np.zeros(m), np.zeros((m, m)), 0)


def kalman_step(state, y, model, inflation=1.0, z=None):
    """One predict/update cycle from time ``state.step`` to ``state.step + 1``.

    The observation noise of ``y`` is ``sigma_u_sq * inflation``. When ``z``
    is given the update uses the stacked observation ``[y; z]``.
    """
    if inflation < 1:
        raise InvalidInputError("inflation must be >= 1")
    _check_psd(state.P)
    k = state.step + 1
    with_z = z is not None
    obs = np.atleast_1d(check_finite(y, "y"))
    if with_z:
        obs = np.concatenate([obs, np.atleast_1d(check_finite(z, "z"))])
    F = model.F_at(k - 1)
    C = _obs_matrix(model, k, with_z)
    if obs.shape != (C.shape[0],):
        raise InvalidInputError(f"observation has shape {obs.shape}, expected ({C.shape[0]},)")
    x_pred = F @ state.x
    P_pred = _predict_cov(state.P, F, model.B_at(k - 1), model.sigma_w_sq)
    K, P = _gain(P_pred, C, _obs_noise(model, k, inflation, with_z))
    return KalmanState(x_pred + K @ (obs - C @ x_pred), P, k)


# -------------------------------------------------------------- PLMMSE cycle


@dataclass
class RecursiveFilterState:
    x_hat_z: np.ndarray
    x_tilde: np.ndarray
    p_cov: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, model):
        m = model.dim
        return cls(np.zeros(m), np.zeros(m), np.zeros((m, m)), 0)


def _inflation(model, stats):
    beta = float(np.ravel(stats.beta)[0])
    sw = model.sigma_w_sq
    if not beta < sw:
        raise InvalidConfigurationError(
            f"beta={beta:.6g} >= sigma_w_sq={sw:.6g}: the linear channel has no weight left"
        )
    return sw / (sw - beta)


def plmmse_cycle(state, y, z, model, stats):
    """Advance the recursive PLMMSE filter by one observation pair.

    Returns the new state and ``x_pl(k) = x_hat_z(k) + x_tilde(k)``, where
    ``x_hat_z`` follows ``F x_hat_z + B E[W|z]`` and ``x_tilde`` is a Kalman
    filter on ``y - H x_hat_z`` with observation noise
    ``sigma_u_sq * sigma_w_sq / (sigma_w_sq - beta)``.
    """
    inflation = _inflation(model, stats)
    _check_psd(state.p_cov, "p_cov")
    k = state.step + 1
    F, B, H = model.F_at(k - 1), model.B_at(k - 1), model.H_at(k)
    z = np.atleast_1d(check_finite(z, "z"))
    if z.size != 1:
        raise InvalidInputError("z must be scalar per step")
    w_hat = float(model.w_given_z(z[0]))
    x_hat_z = F @ state.x_hat_z + B[:, 0] * w_hat
    y_tilde = np.atleast_1d(check_finite(y, "y")) - H @ x_hat_z
    P_pred = _predict_cov(state.p_cov, F, B, model.sigma_w_sq)
    K, P = _gain(P_pred, H, _obs_noise(model, k, inflation, False))
    L = (np.eye(model.dim) - K @ H) @ F
    x_tilde = L @ state.x_tilde + K @ y_tilde
    return RecursiveFilterState(x_hat_z, x_tilde, P, k), x_hat_z + x_tilde


# ---------------------------------------------------------------- batch form


def drive_matrix(model, n):
    """Block lower-triangular ``Psi`` with ``(X(1),...,X(n)) = Psi (W(0),...,W(n-1))``."""
    m = model.dim
    psi = np.zeros((m * n, n))
    for j in range(n):
        col = model.B_at(j)[:, 0]
        for i in range(j, n):
            if i > j:
                col = model.F_at(i) @ col
            psi[i * m:(i + 1) * m, j] = col
    return psi


def _block_diag(mats):
    rows = sum(a.shape[0] for a in mats)
    cols = sum(a.shape[1] for a in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for a in mats:
        out[r:r + a.shape[0], c:c + a.shape[1]] = a
        r += a.shape[0]
        c += a.shape[1]
    return out


def batch_plmmse(model, y_seq, z_seq, stats):
    """Non-recursive PLMMSE of ``X(1..n)`` from the stacked observations.

    ``E[X|Z] = Psi E[W|Z]`` and the gain is the additive-noise PLMMSE gain
    with ``Cov(X) = sigma_w_sq Psi Psi^T`` and ``Cov(E[X|Z]) = beta Psi Psi^T``.
    Returns an ``(n, M)`` array of smoothed estimates; the last row is the
    filtered estimate at time ``n``.
    """
    y_seq = np.asarray(y_seq, dtype=float).reshape(len(y_seq), -1)
    z_seq = np.asarray(z_seq, dtype=float).reshape(-1)
    n, m = y_seq.shape[0], model.dim
    psi = drive_matrix(model, n)
    gram = psi @ psi.T
    beta = float(np.ravel(stats.beta)[0])
    hb = _block_diag([model.H_at(k) for k in range(1, n + 1)])
    cov_uu = model.sigma_u_sq * np.eye(hb.shape[0])
    gain = core.additive_noise_gain(model.sigma_w_sq * gram, beta * gram, hb, cov_uu)
    x_z = psi @ model.w_given_z(z_seq)
    est = x_z + gain @ (y_seq.ravel() - hb @ x_z)
    return est.reshape(n, m)


def batch_lmmse(model, y_seq, inflation=1.0, z_seq=None):
    """LMMSE of ``X(1..n)`` from stacked ``Y`` (and ``Z`` when given)."""
    y_seq = np.asarray(y_seq, dtype=float).reshape(len(y_seq), -1)
    n, m = y_seq.shape[0], model.dim
    psi = drive_matrix(model, n)
    cov_xx = model.sigma_w_sq * psi @ psi.T
    with_z = z_seq is not None
    blocks, obs = [], []
    for k in range(1, n + 1):
        blocks.append(_obs_matrix(model, k, with_z))
        o = [y_seq[k - 1]]
        if with_z:
            o.append(np.atleast_1d(np.asarray(z_seq, dtype=float).reshape(n, -1)[k - 1]))
        obs.append(np.concatenate(o))
    C = _block_diag(blocks)
    R = _block_diag([_obs_noise(model, k, inflation, with_z) for k in range(1, n + 1)])
    gain = cov_xx @ C.T @ pseudo_inverse(C @ cov_xx @ C.T + R)
    return (gain @ np.concatenate(obs)).reshape(n, m)


# ------------------------------------------------------------------------ IMM


def default_transition(p):
    """Rows ``(1 - p, p)``: the mode is drawn afresh each step, as in the prior.

    Mode 0 is the nominal regime (``sigma2_sq``), mode 1 the maneuver
    regime (``sigma1_sq``).
    """
    return np.array([[1.0 - p, p], [1.0 - p, p]])


@dataclass
class ImmState:
    """Per-mode estimates ``x (runs, 2, M)``, covariances and probabilities."""

    x: np.ndarray
    P: np.ndarray
    mu: np.ndarray
    step: int = 0
    fallback: np.ndarray = field(default=None)

    @classmethod
    def initial(cls, model, runs=None, prior=None):
        m = model.dim
        lead = () if runs is None else (int(runs),)
        mu = np.broadcast_to(
            np.array([1.0 - model.p, model.p]) if prior is None else np.asarray(prior, float),
            lead + (2,),
        ).copy()
        return cls(np.zeros(lead + (2, m)), np.zeros(lead + (2, m, m)), mu, 0,
                   np.zeros(lead, dtype=bool))


def _check_transition(t):
    t = np.asarray(t, dtype=float)
    if t.shape != (2, 2) or np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1) > 1e-12):
        raise InvalidInputError("transition matrix must be 2x2 row-stochastic")
    return t


def _imm_advance(x, P, mu, obs, model, k, trans):
    """Vectorized IMM cycle; leading axis of every array runs over runs."""
    # interaction: c_j = sum_i t_ij mu_i, mixing weights mu_{i|j}
    c = mu @ trans
    with np.errstate(invalid="ignore", divide="ignore"):
        mix = mu[:, :, None] * trans[None] / c[:, None, :]
    mix = np.where(np.isfinite(mix), mix, 0.5)
    x0 = np.einsum("rij,rim->rjm", mix, x)
    dx = x[:, :, None, :] - x0[:, None, :, :]
    P0 = np.einsum("rij,rimn->rjmn", mix, P + 0.0) + np.einsum(
        "rij,rijm,rijn->rjmn", mix, dx, dx
    )
    F, B = model.F_at(k - 1), model.B_at(k - 1)
    C = _obs_matrix(model, k, True)
    R = _obs_noise(model, k, 1.0, True)
    q = np.array([model.sigma2_sq, model.sigma1_sq])
    xp = x0 @ F.T
    Pp = F @ P0 @ F.T + q[None, :, None, None] * (B @ B.T)
    S = C @ Pp @ C.T + R
    Sinv = np.linalg.inv(S)
    K = Pp @ C.T @ Sinv
    innov = obs[:, None, :] - xp @ C.T
    x_new = xp + np.einsum("rjmd,rjd->rjm", K, innov)
    P_new = Pp - K @ S @ np.swapaxes(K, -1, -2)
    P_new = 0.5 * (P_new + np.swapaxes(P_new, -1, -2))
    d = C.shape[0]
    _, logdet = np.linalg.slogdet(S)
    maha = np.einsum("rjd,rjde,rje->rj", innov, Sinv, innov)
    loglik = -0.5 * (maha + logdet + d * np.log(2 * np.pi))
    with np.errstate(divide="ignore"):
        logpost = loglik + np.log(c)
    top = logpost.max(axis=1, keepdims=True)
    bad = ~np.isfinite(top[:, 0])
    w = np.exp(logpost - np.where(np.isfinite(top), top, 0.0))
    w_sum = w.sum(axis=1, keepdims=True)
    bad |= ~(w_sum[:, 0] > 0) | ~np.isfinite(w_sum[:, 0])
    # fallback: the predicted mode weights, or the prior if those vanish too
    c_sum = c.sum(axis=1, keepdims=True)
    prior = np.array([1.0 - model.p, model.p])
    fallback = np.where(c_sum > 0, c / np.where(c_sum > 0, c_sum, 1.0), prior)
    mu_new = np.where(bad[:, None], fallback, w / np.where(w_sum > 0, w_sum, 1.0))
    fused = np.einsum("rj,rjm->rm", mu_new, x_new)
    return x_new, P_new, mu_new, fused, bad


def imm_step(state, y, z, model, transition=None):
    """One two-mode IMM cycle on the stacked observation ``[y; z]``.

    Works on a single run (``state.x`` of shape ``(2, M)``) or on a batch
    (``(runs, 2, M)``). Returns the new state and the probability-weighted
    estimate. If both mode likelihoods vanish the mode probabilities fall
    back to the predicted mixing weights (or the prior when those vanish)
    and ``state.fallback`` is set.
    """
    trans = _check_transition(default_transition(model.p) if transition is None else transition)
    single = state.x.ndim == 2
    x = state.x[None] if single else state.x
    P = state.P[None] if single else state.P
    mu = state.mu[None] if single else state.mu
    _check_psd(P)
    obs = np.concatenate(
        [np.atleast_2d(check_finite(y, "y")).reshape(x.shape[0], -1),
         np.atleast_2d(check_finite(z, "z")).reshape(x.shape[0], -1)],
        axis=1,
    )
    k = state.step + 1
    x, P, mu, fused, bad = _imm_advance(x, P, mu, obs, model, k, trans)
    if single:
        return ImmState(x[0], P[0], mu[0], k, bad[0]), fused[0]
    return ImmState(x, P, mu, k, bad), fused


# ------------------------------------------------------------ batched driver


@dataclass
class FilterOutputs:
    """Estimates ``(runs, steps, M)`` per filter and the IMM fallback count."""

    plmmse: np.ndarray
    kalman: np.ndarray
    imm: np.ndarray | None
    imm_fallbacks: int = 0
    extra: dict = field(default_factory=dict)


def run_filters(model, traj, stats=None, transition=None, with_imm=True):
    """Run PLMMSE, the Kalman filter on ``[Y; Z]`` and the IMM over all runs."""
    stats = model.shrinkage_stats() if stats is None else stats
    inflation = _inflation(model, stats)
    runs, steps, m = traj.states.shape
    k_pl, _ = gain_sequence(model, steps, inflation, with_z=False)
    k_kf, _ = gain_sequence(model, steps, 1.0, with_z=True)
    trans = _check_transition(default_transition(model.p) if transition is None else transition)
    out_pl = np.empty((runs, steps, m))
    out_kf = np.empty((runs, steps, m))
    out_imm = np.empty((runs, steps, m)) if with_imm else None
    xz = np.zeros((runs, m))
    xt = np.zeros((runs, m))
    xk = np.zeros((runs, m))
    imm = ImmState.initial(model, runs)
    ix, iP, imu = imm.x, imm.P, imm.mu
    fallbacks = 0
    w_hat = model.w_given_z(traj.z[:, :, 0])
    for k in range(1, steps + 1):
        F, B, H = model.F_at(k - 1), model.B_at(k - 1)[:, 0], model.H_at(k)
        C = _obs_matrix(model, k, True)
        xz = xz @ F.T + w_hat[:, k - 1, None] * B
        yt = traj.y[:, k - 1] - xz @ H.T
        xt = xt @ F.T
        xt = xt + (yt - xt @ H.T) @ k_pl[k - 1].T
        out_pl[:, k - 1] = xz + xt
        obs = np.concatenate([traj.y[:, k - 1], traj.z[:, k - 1]], axis=1)
        xk = xk @ F.T
        xk = xk + (obs - xk @ C.T) @ k_kf[k - 1].T
        out_kf[:, k - 1] = xk
        if with_imm:
            ix, iP, imu, fused, bad = _imm_advance(ix, iP, imu, obs, model, k, trans)
            out_imm[:, k - 1] = fused
            fallbacks += int(bad.sum())
    return FilterOutputs(out_pl, out_kf, out_imm, fallbacks)


def kinematic_errors(est, states):
    """Per-run mean squared position, velocity and acceleration errors.

    For the position-history state, velocity and acceleration are the
    differences ``x0 - x1`` and ``x0 - 2 x1 + x2`` of the state components.
    """
    e = est - states
    pos = e[..., 0]
    vel = e[..., 0] - e[..., 1]
    acc = e[..., 0] - 2.0 * e[..., 1] + e[..., 2]
    return {q: np.mean(a**2, axis=-1) for q, a in (("pos", pos), ("vel", vel), ("acc", acc))}


FILTERS = ("pl", "kf", "imm")
QUANTITIES = ("pos", "vel", "acc")
U_FAMILIES = ("gaussian", "mixture")


def _tracking_point(args):
    (fi, family, iv, sv, mc_runs, steps, seed, p, s1, s2, su, transition,
     outlier_prob, outlier_scale, with_imm) = args
    model = white_acceleration_model(su * su, sv * sv, p, s1 * s1, s2 * s2)
    traj = simulate_trajectories(
        model, steps, mc_runs, seed, u_family=family, outlier_prob=outlier_prob,
        outlier_scale=outlier_scale, keys=(fi, iv),
    )
    out = run_filters(model, traj, transition=transition, with_imm=with_imm)
    errs = {}
    for name, est in (("pl", out.plmmse), ("kf", out.kalman), ("imm", out.imm)):
        if est is None:
            for q in QUANTITIES:
                errs[(name, q)] = np.full(mc_runs, np.nan)
            continue
        for q, v in kinematic_errors(est, traj.states).items():
            errs[(name, q)] = v
    return errs, out.imm_fallbacks, float(model.shrinkage_stats().beta[0])


def tracking_experiment(sigma_v_grid=tuple(range(1, 16)), mc_runs=100, steps=1000, seed=0,
                        u_family="gaussian", p=0.05, sigma1=10.0, sigma2=1.0, sigma_u=5.0,
                        transition=None, outlier_prob=0.1, outlier_scale=5.0, with_imm=True):
    """Kinematic MSE of PLMMSE, Kalman and IMM versus acceleration-noise std.

    ``sigma*`` arguments are standard deviations. ``u_family`` is
    ``"gaussian"``, ``"mixture"`` or ``"both"``; with ``"both"`` the table has
    one block of rows per family (column ``u_mixture``). Each cell averages
    the per-run time-averaged squared error over ``mc_runs`` runs; ``_se``
    columns are standard errors across runs.
    """
    families = U_FAMILIES if u_family == "both" else (u_family,)
    for f in families:
        if f not in U_FAMILIES:
            raise InvalidInputError(f"unknown U noise family {f!r}")
    grid = [float(s) for s in np.atleast_1d(sigma_v_grid)]
    if not grid or min(grid) <= 0:
        raise InvalidInputError("sigma_v grid must be nonempty and positive")
    if mc_runs < 2:
        raise InvalidInputError("mc_runs must be at least 2")
    tasks = []
    for f in families:
        fi = U_FAMILIES.index(f)
        for iv, sv in enumerate(grid):
            tasks.append((fi, f, iv, sv, int(mc_runs), int(steps), seed, p, sigma1, sigma2,
                          sigma_u, transition, outlier_prob, outlier_scale, with_imm))
    workers = worker_count()
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(_tracking_point, tasks))
    else:
        results = [_tracking_point(t) for t in tasks]
    columns = ["u_mixture", "sigma_v", "beta"]
    for name in FILTERS:
        for q in QUANTITIES:
            columns += [f"mse_{name}_{q}", f"mse_{name}_{q}_se"]
    rows = []
    runs = {f"mse_{n}_{q}": [] for n in FILTERS for q in QUANTITIES}
    total_fallbacks = 0
    for task, (errs, fb, beta) in zip(tasks, results):
        total_fallbacks += fb
        row = [float(task[0]), task[3], beta]
        for name in FILTERS:
            for q in QUANTITIES:
                mean, se = mean_and_se(errs[(name, q)])
                row += [mean, se]
                runs[f"mse_{name}_{q}"].append(errs[(name, q)])
        rows.append(row)
    meta = {
        "experiment": "track",
        "seed": seed,
        "mc_runs": mc_runs,
        "steps": steps,
        "u_family": u_family,
        "p": p,
        "sigma1": sigma1,
        "sigma2": sigma2,
        "sigma_u": sigma_u,
        "outlier_prob": outlier_prob,
        "outlier_scale": outlier_scale,
        "imm_fallbacks": total_fallbacks,
    }
    return ResultTable(columns, np.array(rows), meta, {k: np.array(v) for k, v in runs.items()})
