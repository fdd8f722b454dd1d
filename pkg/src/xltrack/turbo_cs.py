"""Visibility-region detection by turbo message passing.

Module A solves, for every antenna, the real-valued linear model
``y_m = G_m u_m + z`` by LMMSE under Gaussian priors. Module B treats the
extrinsic means from A as AWGN observations of ``u_{q,m} = alpha_{q,m} beta_{q,m}``
and runs sum-product over the spatial Markov chain of each grid point's
visibility support. Extrinsic Gaussian messages are exchanged until the
A-posterior stops moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .priors import TemporalPrior, VRMarkovParams


V_MAX = 1e6
V_MIN = 1e-12
JITTER = 1e-10
LOGIT_MAX = 500.0


@dataclass
class FilterSet:
    omega: np.ndarray
    eta: float

    @property
    def size(self) -> int:
        return self.omega.size


@dataclass
class AntennaModel:
    """Clipped sensing matrices for all antennas.

    Attributes:
        G: complex, shape (M, N, K); ``G[m]`` is antenna m's N x |Omega| matrix.
        y: complex, shape (M, N); antenna m's observation.
    """

    G: np.ndarray
    y: np.ndarray

    @property
    def M(self) -> int:
        return self.G.shape[0]

    @property
    def K(self) -> int:
        return self.G.shape[2]

    def stacked(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Real form ``([Re G; Im G], [Re y; Im y])`` for antenna ``m``."""
        G, y = self.G[m], self.y[m]
        return np.vstack([G.real, G.imag]), np.concatenate([y.real, y.imag])


@dataclass
class GaussMsg:
    mean: np.ndarray
    var: np.ndarray

    def copy(self) -> "GaussMsg":
        return GaussMsg(self.mean.copy(), self.var.copy())


@dataclass
class VRPosterior:
    """Posteriors over the full grid; rows outside Omega hold the prior values.

    ``U`` has shape (M, Q); the rest are (Q, M).
    """

    U: np.ndarray
    p_alpha: np.ndarray
    beta_mean: np.ndarray
    beta_var: np.ndarray
    omega: np.ndarray
    iterations: int = 0
    message_trace: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def default_threshold(x_hat: np.ndarray, gamma: float, N: int, rel: float = 0.01, floor: float = 10.0) -> float:
    peak = float(np.max(np.abs(x_hat) ** 2)) if x_hat.size else 0.0
    noise = floor / (gamma * N) if np.isfinite(gamma) and gamma > 0 else 0.0
    eta = max(rel * peak, noise)
    return eta if eta > 0 else np.finfo(float).tiny


def filter_grid(x_hat: np.ndarray, eta: float) -> FilterSet:
    if eta <= 0:
        raise ValueError("energy threshold must be positive")
    return FilterSet(omega=np.flatnonzero(np.abs(x_hat) ** 2 > eta), eta=float(eta))


def build_antenna_models(B: np.ndarray, x_hat: np.ndarray, omega: np.ndarray, y: np.ndarray, M: int) -> AntennaModel:
    """``G_m = B_m[:, Omega] * x_hat[Omega]`` with ``B_m`` the N rows of antenna m."""
    omega = np.asarray(omega, dtype=int)
    if omega.size == 0:
        raise ValueError("empty filter set")
    N = B.shape[0] // M
    G = B.reshape(M, N, -1)[:, :, omega] * x_hat[omega][None, None, :]
    return AntennaModel(G=G, y=np.asarray(y).reshape(M, N))


def lmmse_module_a(model: AntennaModel, prior: GaussMsg, gamma: float, flags: list | None = None) -> GaussMsg:
    """Per-antenna LMMSE on the real-valued model.

    ``prior`` arrays have shape (M, K). Real and imaginary noise parts each
    carry half the complex noise variance, so the real-model precision is
    ``2 gamma``.
    """
    if np.any(prior.var <= 0):
        raise ValueError("prior variances must be positive")
    g = 2.0 * gamma
    GhG = np.real(np.einsum("mnk,mnl->mkl", model.G.conj(), model.G))
    Ghy = np.real(np.einsum("mnk,mn->mk", model.G.conj(), model.y))
    K = model.K
    A = g * GhG + np.eye(K)[None] * (1.0 / prior.var)[:, None, :]
    try:
        V = np.linalg.inv(A)
        if not np.all(np.isfinite(V)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        if flags is not None:
            flags.append("lmmse_jitter")
        V = np.linalg.inv(A + JITTER * np.eye(K)[None])
    mean = np.einsum("mkl,ml->mk", V, prior.mean / prior.var + g * Ghy)
    var = np.maximum(np.real(np.diagonal(V, axis1=1, axis2=2)), V_MIN)
    return GaussMsg(mean, var.copy())


def extrinsic(post: GaussMsg, prior: GaussMsg, flags: list | None = None) -> GaussMsg:
    """Divide the prior out of the posterior; non-positive precision clamps the variance to ``V_MAX``."""
    prec = 1.0 / post.var - 1.0 / prior.var
    bad = prec <= 1.0 / V_MAX
    if np.any(bad) and flags is not None and "extrinsic_clamped" not in flags:
        flags.append("extrinsic_clamped")
    var = np.where(bad, V_MAX, 1.0 / np.where(bad, 1.0, prec))
    mean = var * (post.mean / post.var - prior.mean / prior.var)
    return GaussMsg(mean, var)


def _log_normal(x, mean, var):
    return -0.5 * np.log(2 * np.pi * var) - 0.5 * (x - mean) ** 2 / var


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def chain_marginals(log_unary: np.ndarray, params: VRMarkovParams | None) -> np.ndarray:
    """P(alpha=1) for K independent binary chains along the last axis.

    ``log_unary`` has shape (K, M, 2) with index 0 for alpha=0. ``params``
    None means no coupling between neighbours.
    """
    K, M, _ = log_unary.shape
    if params is None:
        return expit(log_unary[..., 1] - log_unary[..., 0])
    # forward / backward messages carried as log-odds, logT[a_prev, a]
    logT = _log(np.array([[1 - params.p01S, params.p01S], [params.p10S, 1 - params.p10S]]))
    # clipped so certain evidence cannot meet a forbidden transition as inf - inf
    ev = np.clip(log_unary[..., 1] - log_unary[..., 0], -LOGIT_MAX, LOGIT_MAX)
    fwd = np.empty((K, M))
    bwd = np.zeros((K, M))
    fwd[:, 0] = ev[:, 0]
    for m in range(1, M):
        f = fwd[:, m - 1]
        fwd[:, m] = ev[:, m] + np.logaddexp(logT[0, 1], f + logT[1, 1]) - np.logaddexp(logT[0, 0], f + logT[1, 0])
    for m in range(M - 2, -1, -1):
        w = ev[:, m + 1] + bwd[:, m + 1]
        bwd[:, m] = np.logaddexp(logT[1, 0], w + logT[1, 1]) - np.logaddexp(logT[0, 0], w + logT[0, 1])
    return expit(fwd + bwd)


def spike_slab_markov_module_b(
    prior_b: GaussMsg,
    pi: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    params: VRMarkovParams | None,
):
    """Structured denoiser for one turbo iteration.

    All arrays have shape (K, M): one row per retained grid point. Returns
    ``(p_alpha, beta_mean, beta_var, post)`` where ``post`` is the u-posterior
    message. ``params`` None gives the independent (i.i.d.) prior.
    """
    obs, v = prior_b.mean, prior_b.var
    log_unary = np.stack(
        [_log(1 - pi) + _log_normal(obs, 0.0, v), _log(pi) + _log_normal(obs, mu, nu + v)], axis=-1
    )
    p1 = chain_marginals(log_unary, params)

    v1 = 1.0 / (1.0 / nu + 1.0 / v)
    m1 = v1 * (mu / nu + obs / v)
    beta_mean = p1 * m1 + (1 - p1) * mu
    beta_var = p1 * (v1 + m1**2) + (1 - p1) * (nu + mu**2) - beta_mean**2
    u_mean = p1 * m1
    u_var = p1 * (v1 + m1**2) - u_mean**2
    return (
        p1,
        beta_mean,
        np.maximum(beta_var, V_MIN),
        GaussMsg(u_mean, np.maximum(u_var, V_MIN)),
    )


def prior_moments(pi: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> GaussMsg:
    """Mean and variance of ``alpha * beta`` under independent Bernoulli / Gaussian priors."""
    mean = pi * mu
    var = pi * (nu + mu**2) - mean**2
    return GaussMsg(mean, np.maximum(var, V_MIN))


def run_turbo_cs(
    B: np.ndarray,
    x_hat: np.ndarray,
    y: np.ndarray,
    gamma: float,
    prior: TemporalPrior,
    params: VRMarkovParams,
    M: int,
    eta: float | None = None,
    max_iter: int = 20,
    tol: float = 1e-4,
    markov: bool = True,
    damping: float = 0.5,
    damp_always: bool = False,
) -> VRPosterior:
    """Alternate Module A and Module B on the filtered grid.

    Returns a :class:`VRPosterior` with ``U`` zero outside Omega. An empty
    Omega skips detection and returns an all-zero ``U`` with the flag
    ``"empty_omega"``; the caller decides what to keep.
    """
    Q = x_hat.size
    N = B.shape[0] // M
    if eta is None:
        eta = default_threshold(x_hat, gamma, N)
    fs = filter_grid(x_hat, eta)
    omega = fs.omega
    p_alpha = prior.pi.copy()
    beta_mean, beta_var = prior.mu.copy(), prior.nu.copy()
    U = np.zeros((M, Q))
    if omega.size == 0:
        return VRPosterior(U, p_alpha, beta_mean, beta_var, omega, flags=["empty_omega"])

    flags: list = []
    model = build_antenna_models(B, x_hat, omega, y, M)
    if markov:
        pi, chain = prior.pi[omega], params
    else:
        pi, chain = np.full((omega.size, M), params.kappa), None
    mu, nu = prior.mu[omega], prior.nu[omega]

    # messages to Module A are (M, K); Module B works on (K, M)
    prior_a = prior_moments(pi, mu, nu)
    prior_a = GaussMsg(prior_a.mean.T.copy(), prior_a.var.T.copy())
    post_a = prior_a
    trace, damped, prev_change = [], damp_always, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        new_post = lmmse_module_a(model, prior_a, gamma, flags)
        change = np.linalg.norm(new_post.mean - post_a.mean) / max(np.linalg.norm(new_post.mean), 1e-30)
        post_a = new_post
        trace.append(float(change))

        ext_a = extrinsic(post_a, prior_a, flags)
        prior_b = GaussMsg(ext_a.mean.T, ext_a.var.T)
        p1, bm, bv, post_b = spike_slab_markov_module_b(prior_b, pi, mu, nu, chain)
        ext_b = extrinsic(post_b, prior_b, flags)
        new_prior = GaussMsg(ext_b.mean.T.copy(), ext_b.var.T.copy())
        # an invalid extrinsic would leave Module A unregularized on near-collinear
        # columns; skip the update for those entries instead
        stale = new_prior.var >= V_MAX
        new_prior.mean[stale] = prior_a.mean[stale]
        new_prior.var[stale] = prior_a.var[stale]

        if it > 2 and change > prev_change and not damped:
            damped = True
            flags.append("damped")
        if damped:
            new_prior = GaussMsg(
                damping * new_prior.mean + (1 - damping) * prior_a.mean,
                damping * new_prior.var + (1 - damping) * prior_a.var,
            )
        prior_a = new_prior
        prev_change = change
        if change < tol:
            break

    U[:, omega] = np.maximum(post_a.mean, 0.0)
    p_alpha[omega], beta_mean[omega], beta_var[omega] = p1, bm, bv
    return VRPosterior(U, p_alpha, beta_mean, beta_var, omega, iterations=it, message_trace=trace, flags=flags)
