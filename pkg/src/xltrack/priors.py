"""Structured priors: support Markov chain, Bernoulli-Gamma precisions,
2-D Markov visibility supports and the Gauss-Markov visibility values.

Samplers take an explicit ``numpy.random.Generator``. The ``predict_*``
functions are the one-step predictions that carry a posterior at frame t
into the prior of frame t+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SupportMarkovParams:
    """Birth (``p01``) and death (``p10``) probabilities of channel supports."""

    p01: float = 0.0025
    p10: float = 0.05

    def __post_init__(self):
        _check_prob(self.p01, "p01")
        _check_prob(self.p10, "p10")


@dataclass(frozen=True)
class GammaHyper:
    """Gamma hyper-parameters: active precision (a, b), inactive (a_bar, b_bar), noise (c, d)."""

    a: float = 1.0
    b: float = 1.0
    a_bar: float = 1.0
    b_bar: float = 1e-4
    c: float = 1e-6
    d: float = 1e-6

    def __post_init__(self):
        for name in ("a", "b", "a_bar", "b_bar", "c", "d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.a_bar / self.b_bar < 100 * self.a / self.b:
            raise ValueError("inactive precision mean a_bar/b_bar must dominate a/b by at least 100x")


@dataclass(frozen=True)
class VRMarkovParams:
    """Temporal (T) and spatial (S) transitions of visibility supports plus the visibility level kappa."""

    p01T: float = 0.02
    p10T: float = 0.02
    p01S: float = 0.05
    p10S: float = 0.05
    kappa: float = 0.5

    def __post_init__(self):
        for name in ("p01T", "p10T", "p01S", "p10S", "kappa"):
            _check_prob(getattr(self, name), name)


@dataclass(frozen=True)
class GaussMarkovParams:
    """AR(1) visibility values: ``beta_t = (1-eps)(beta_{t-1}-zeta) + eps*w + zeta``, ``w ~ N(0, sigma2)``."""

    eps: float = 0.1
    sigma2: float = 1.0
    zeta: float = 1.0

    def __post_init__(self):
        _check_prob(self.eps, "eps")
        if self.sigma2 <= 0 or self.zeta <= 0:
            raise ValueError("sigma2 and zeta must be positive")

    @property
    def stationary_var(self) -> float:
        return self.eps * self.sigma2 / (2 - self.eps)


@dataclass
class TemporalPrior:
    """Predicted priors for one frame.

    Attributes:
        lam: support probabilities, shape (Q,).
        pi: visibility probabilities, shape (Q, M).
        mu: visibility value means, shape (Q, M).
        nu: visibility value variances, shape (Q, M).
    """

    lam: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        if np.any((self.lam < 0) | (self.lam > 1)) or np.any((self.pi < 0) | (self.pi > 1)):
            raise ValueError("prior probabilities must lie in [0, 1]")
        if np.any(self.nu <= 0):
            raise ValueError("prior variances must be positive")


def _check_prob(p: float, name: str):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name}={p} is not a probability")


def steady_state_support(params: SupportMarkovParams) -> float:
    total = params.p01 + params.p10
    if total == 0:
        raise ValueError("steady state undefined when p01 = p10 = 0")
    return params.p01 / total


def _bernoulli_step(prev: np.ndarray, p01: float, p10: float, u: np.ndarray) -> np.ndarray:
    p_one = np.where(prev, 1 - p10, p01)
    return u < p_one


def sample_support_sequence(params: SupportMarkovParams, Q: int, T: int, rng) -> np.ndarray:
    """Independent support chains, shape (Q, T), started from the steady state."""
    s = np.empty((Q, T), dtype=bool)
    s[:, 0] = rng.random(Q) < steady_state_support(params)
    for t in range(1, T):
        s[:, t] = _bernoulli_step(s[:, t - 1], params.p01, params.p10, rng.random(Q))
    return s


def _combine(p_a: np.ndarray, p_b: np.ndarray) -> np.ndarray:
    """Normalized product of two Bernoulli(1) probabilities."""
    one = p_a * p_b
    zero = (1 - p_a) * (1 - p_b)
    tot = one + zero
    return np.divide(one, tot, out=np.full_like(one, 0.5), where=tot > 0)


def sample_vr_frame(prev: np.ndarray | None, params: VRMarkovParams, M: int, rng, n: int = 1) -> np.ndarray:
    """One frame of visibility supports for ``n`` independent fields, shape (n, M).

    Antenna 1 follows the temporal chain only (or ``kappa`` when there is no
    previous frame); later antennas combine the spatial transition from
    antenna m-1 and the temporal transition from the previous frame by a
    normalized product.
    """
    u = rng.random((n, M))
    out = np.empty((n, M), dtype=bool)
    if prev is None:
        out[:, 0] = u[:, 0] < params.kappa
    else:
        out[:, 0] = _bernoulli_step(prev[:, 0], params.p01T, params.p10T, u[:, 0])
    for m in range(1, M):
        p_s = np.where(out[:, m - 1], 1 - params.p10S, params.p01S)
        if prev is None:
            p = p_s
        else:
            p_t = np.where(prev[:, m], 1 - params.p10T, params.p01T)
            p = _combine(p_s, p_t)
        out[:, m] = u[:, m] < p
    return out


def sample_vr_support(params: VRMarkovParams, M: int, T: int, rng) -> np.ndarray:
    """A single 2-D visibility support field, shape (M, T)."""
    frames = []
    prev = None
    for _ in range(T):
        prev = sample_vr_frame(prev, params, M, rng)
        frames.append(prev[0])
    return np.stack(frames, axis=1)


def gauss_markov_step(prev: np.ndarray, params: GaussMarkovParams, rng) -> np.ndarray:
    w = rng.normal(0.0, np.sqrt(params.sigma2), size=np.shape(prev))
    return (1 - params.eps) * (prev - params.zeta) + params.eps * w + params.zeta


def sample_gauss_markov_initial(params: GaussMarkovParams, shape, rng) -> np.ndarray:
    return rng.normal(params.zeta, np.sqrt(params.stationary_var), size=shape)


def sample_gauss_markov(params: GaussMarkovParams, M: int, T: int, rng) -> np.ndarray:
    """Independent Gauss-Markov trajectories, shape (M, T), started from the stationary law."""
    out = np.empty((M, T))
    out[:, 0] = sample_gauss_markov_initial(params, M, rng)
    for t in range(1, T):
        out[:, t] = gauss_markov_step(out[:, t - 1], params, rng)
    return out


def predict_support(q_s: np.ndarray, params: SupportMarkovParams) -> np.ndarray:
    q_s = np.asarray(q_s, dtype=float)
    return (1 - params.p10) * q_s + params.p01 * (1 - q_s)


def predict_alpha(q_alpha: np.ndarray, params: VRMarkovParams, omega: np.ndarray) -> np.ndarray:
    """Visibility priors for the next frame, shape (Q, M).

    ``q_alpha`` holds posterior P(alpha=1) for every grid point; rows outside
    ``omega`` are ignored and reset to ``kappa``.
    """
    q_alpha = np.asarray(q_alpha, dtype=float)
    out = np.full_like(q_alpha, params.kappa)
    rows = np.asarray(omega, dtype=int)
    qa = q_alpha[rows]
    out[rows] = (1 - params.p10T) * qa + params.p01T * (1 - qa)
    return out


def predict_beta(mu: np.ndarray, nu: np.ndarray, params: GaussMarkovParams, omega: np.ndarray):
    """Gauss-Markov prediction of visibility values; rows outside ``omega`` reset to the stationary law."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    rows = np.asarray(omega, dtype=int)
    if np.any(nu[rows] <= 0):
        raise ValueError("posterior variances must be positive")
    mu_hat = np.full_like(mu, params.zeta)
    nu_hat = np.full_like(nu, params.stationary_var)
    mu_hat[rows] = (1 - params.eps) * mu[rows] + params.eps * params.zeta
    nu_hat[rows] = (1 - params.eps) ** 2 * nu[rows] + params.eps**2 * params.sigma2
    return mu_hat, nu_hat


def initial_prior(
    Q: int,
    M: int,
    support: SupportMarkovParams,
    vr: VRMarkovParams,
    values: GaussMarkovParams,
) -> TemporalPrior:
    """Uninformative first-frame prior: steady-state supports, ``kappa`` visibility, stationary values."""
    return TemporalPrior(
        lam=np.full(Q, steady_state_support(support)),
        pi=np.full((Q, M), vr.kappa),
        mu=np.full((Q, M), values.zeta),
        nu=np.full((Q, M), values.stationary_var),
    )
