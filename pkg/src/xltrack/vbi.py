"""Mean-field variational inference for ``y = F x + z`` under the
support / precision / signal hierarchy.

Factors: ``q(x) q(rho) q(s) q(gamma)``. ``q(x)`` is either the exact
Gaussian posterior (full covariance, one Q x Q solve per update) or the
inverse-free surrogate: the quadratic data term is majorized by
``L ||x - x_prev||^2`` with ``L >= lambda_max(<gamma> F^H F)``, which
decouples the coordinates and leaves a diagonal covariance
``1 / (L + <rho_q>)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse import linalg as sparse_linalg
from scipy.special import digamma, gammaln

from .priors import GammaHyper

log = logging.getLogger(__name__)

EXACT = "exact"
INVERSE_FREE = "inverse_free"
JITTER = 1e-10
LAMBDA_CLAMP = 1e-12
# first-cycle mean steps of a cold inverse-free start, so weak columns are
# not pruned before their means have grown
WARMUP_STEPS = 20
DENSE_EIG_MAX = 64


@dataclass
class VBIState:
    """Parameters of the factorized posterior.

    ``var`` is the diagonal of the covariance of q(x); ``Sigma`` holds the
    full covariance after an exact update and is None otherwise.
    """

    mu: np.ndarray
    var: np.ndarray
    a_t: np.ndarray
    b_t: np.ndarray
    lam: np.ndarray
    c_t: float
    d_t: float
    Sigma: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def rho(self) -> np.ndarray:
        return self.a_t / self.b_t

    @property
    def ln_rho(self) -> np.ndarray:
        return digamma(self.a_t) - np.log(self.b_t)

    @property
    def gamma(self) -> float:
        return self.c_t / self.d_t

    @property
    def ln_gamma(self) -> float:
        return float(digamma(self.c_t) - np.log(self.d_t))

    @property
    def second_moment(self) -> np.ndarray:
        return np.abs(self.mu) ** 2 + self.var

    def copy(self) -> "VBIState":
        return VBIState(
            mu=self.mu.copy(), var=self.var.copy(), a_t=self.a_t.copy(), b_t=self.b_t.copy(),
            lam=self.lam.copy(), c_t=self.c_t, d_t=self.d_t,
            Sigma=None if self.Sigma is None else self.Sigma.copy(), flags=list(self.flags),
        )


@dataclass
class VBIResult:
    x: np.ndarray
    gamma: float
    q_s: np.ndarray
    state: VBIState
    iterations: int
    free_energy: list
    flags: list


def init_state(Q: int, y: np.ndarray, lam_prior: np.ndarray, hyper: GammaHyper) -> VBIState:
    """Cold start: zero mean, weak precision ``a/b``, supports at their prior, noise from ``||y||^2``."""
    energy = float(np.vdot(y, y).real)
    MN = y.size
    return VBIState(
        mu=np.zeros(Q, dtype=complex),
        var=np.full(Q, hyper.b / hyper.a),
        a_t=np.full(Q, hyper.a, dtype=float),
        b_t=np.full(Q, hyper.b, dtype=float),
        lam=np.clip(np.asarray(lam_prior, dtype=float), LAMBDA_CLAMP, 1 - LAMBDA_CLAMP).copy(),
        c_t=hyper.c + MN,
        d_t=hyper.d + max(energy, 1e-30),
    )


def _chol_inverse(A: np.ndarray, flags: list) -> np.ndarray:
    try:
        c = linalg.cho_factor(A, lower=False, check_finite=False)
    except linalg.LinAlgError:
        flags.append("x_update_jitter")
        c = linalg.cho_factor(A + JITTER * np.eye(A.shape[0]), lower=False, check_finite=False)
    return linalg.cho_solve(c, np.eye(A.shape[0]), check_finite=False)


def update_x_exact(state: VBIState, F: np.ndarray, y: np.ndarray, G: np.ndarray | None = None,
                   Fhy: np.ndarray | None = None) -> VBIState:
    """Exact Gaussian update: ``Sigma = (<gamma> F^H F + diag<rho>)^-1``, ``mu = <gamma> Sigma F^H y``."""
    if G is None:
        G = F.conj().T @ F
    if Fhy is None:
        Fhy = F.conj().T @ y
    g = state.gamma
    Sigma = _chol_inverse(g * G + np.diag(state.rho), state.flags)
    state.Sigma = Sigma
    state.mu = g * (Sigma @ Fhy)
    state.var = np.real(np.diag(Sigma)).copy()
    return state


def gradient_x(state: VBIState, F: np.ndarray, y: np.ndarray, mu: np.ndarray | None = None) -> np.ndarray:
    """Wirtinger gradient of ``-<gamma>||y - F mu||^2 - sum <rho_q>|mu_q|^2`` w.r.t. conj(mu), up to a factor 1."""
    mu = state.mu if mu is None else mu
    return state.gamma * (F.conj().T @ (y - F @ mu)) - state.rho * mu


def gaussian_log_joint(state: VBIState, F: np.ndarray, y: np.ndarray, mu: np.ndarray) -> float:
    r = y - F @ mu
    return float(-state.gamma * np.vdot(r, r).real - np.sum(state.rho * np.abs(mu) ** 2))


def spectral_bound(F: np.ndarray, margin: float = 1.05, FH: np.ndarray | None = None, tol: float = 1e-6) -> float:
    """``lambda_max(F^H F)`` inflated by ``margin``.

    Small problems use a dense eigensolve; larger ones use Lanczos from a
    fixed start vector, so the value is reproducible.
    """
    Q = F.shape[1]
    if FH is None:
        FH = F.conj().T
    if Q <= DENSE_EIG_MAX:
        lam = linalg.eigvalsh(FH @ F, subset_by_index=[Q - 1, Q - 1])[0]
    else:
        op = sparse_linalg.LinearOperator((Q, Q), matvec=lambda v: FH @ (F @ v), dtype=complex)
        lam = sparse_linalg.eigsh(op, k=1, which="LA", v0=np.ones(Q, dtype=complex), tol=tol,
                                  return_eigenvectors=False)[0]
    return margin * max(float(np.real(lam)), 0.0)


def update_x_inverse_free(state: VBIState, F: np.ndarray, y: np.ndarray, bound: float) -> VBIState:
    """One majorize-minimize step on q(x).

    ``bound`` must dominate ``lambda_max(<gamma> F^H F)``. The new mean is
    ``mu + grad / (bound + <rho>)`` and the covariance is diagonal with
    precision ``bound + <rho>``.
    """
    if bound <= 0:
        raise ValueError("majorization bound must be positive")
    prec = bound + state.rho
    state.mu = state.mu + gradient_x(state, F, y) / prec
    state.var = 1.0 / prec
    state.Sigma = None
    return state


def update_rho(state: VBIState, hyper: GammaHyper) -> VBIState:
    lam = state.lam
    state.a_t = lam * hyper.a + (1 - lam) * hyper.a_bar + 1
    state.b_t = lam * hyper.b + (1 - lam) * hyper.b_bar + state.second_moment
    return state


def support_log_odds(state: VBIState, lam_prior: np.ndarray, hyper: GammaHyper) -> np.ndarray:
    lp = np.clip(np.asarray(lam_prior, dtype=float), LAMBDA_CLAMP, 1 - LAMBDA_CLAMP)
    a, b, ab, bb = hyper.a, hyper.b, hyper.a_bar, hyper.b_bar
    return (
        np.log(lp / (1 - lp))
        + a * np.log(b) - ab * np.log(bb) + gammaln(ab) - gammaln(a)
        + (a - ab) * state.ln_rho - (b - bb) * state.rho
    )


def update_s(state: VBIState, lam_prior: np.ndarray, hyper: GammaHyper) -> VBIState:
    z = support_log_odds(state, lam_prior, hyper)
    state.lam = np.clip(0.5 * (1 + np.tanh(z / 2)), LAMBDA_CLAMP, 1 - LAMBDA_CLAMP)
    return state


def expected_residual(state: VBIState, F: np.ndarray, y: np.ndarray, G: np.ndarray | None = None) -> float:
    """``<||y - F x||^2>`` under q(x)."""
    r = y - F @ state.mu
    fit = float(np.vdot(r, r).real)
    if state.Sigma is not None:
        if G is None:
            G = F.conj().T @ F
        return fit + float(np.real(np.sum(G * state.Sigma.T)))
    col_energy = np.sum(np.abs(F) ** 2, axis=0)
    return fit + float(np.sum(col_energy * state.var))


def update_gamma(state: VBIState, F: np.ndarray, y: np.ndarray, hyper: GammaHyper,
                 G: np.ndarray | None = None) -> VBIState:
    state.c_t = hyper.c + y.size
    state.d_t = hyper.d + expected_residual(state, F, y, G)
    return state


def _gamma_entropy(a, b):
    return a - np.log(b) + gammaln(a) + (1 - a) * digamma(a)


def _gamma_expected_logpdf(shape, rate, mean, ln_mean):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1) * ln_mean - rate * mean


def free_energy(state: VBIState, F: np.ndarray, y: np.ndarray, lam_prior: np.ndarray,
                hyper: GammaHyper, G: np.ndarray | None = None) -> float:
    """Evidence lower bound ``E_q[ln p(y, x, rho, s, gamma)] + H[q]``."""
    MN, Q = F.shape
    lp = np.clip(np.asarray(lam_prior, dtype=float), LAMBDA_CLAMP, 1 - LAMBDA_CLAMP)
    lam = state.lam
    rho, ln_rho = state.rho, state.ln_rho
    g, ln_g = state.gamma, state.ln_gamma

    e_lik = MN * (ln_g - np.log(np.pi)) - g * expected_residual(state, F, y, G)
    e_x = np.sum(ln_rho - np.log(np.pi) - rho * state.second_moment)
    e_rho = np.sum(
        lam * _gamma_expected_logpdf(hyper.a, hyper.b, rho, ln_rho)
        + (1 - lam) * _gamma_expected_logpdf(hyper.a_bar, hyper.b_bar, rho, ln_rho)
    )
    e_s = np.sum(lam * np.log(lp) + (1 - lam) * np.log(1 - lp))
    e_gamma = _gamma_expected_logpdf(hyper.c, hyper.d, g, ln_g)

    if state.Sigma is not None:
        sign, logdet = np.linalg.slogdet(state.Sigma)
        h_x = Q * (1 + np.log(np.pi)) + float(np.real(logdet))
    else:
        h_x = float(np.sum(1 + np.log(np.pi) + np.log(state.var)))
    h_rho = np.sum(_gamma_entropy(state.a_t, state.b_t))
    h_s = -np.sum(lam * np.log(lam) + (1 - lam) * np.log(1 - lam))
    h_gamma = _gamma_entropy(state.c_t, state.d_t)
    return float(e_lik + e_x + e_rho + e_s + e_gamma + h_x + h_rho + h_s + h_gamma)


def run_vbi(
    y: np.ndarray,
    F: np.ndarray,
    lam_prior: np.ndarray,
    hyper: GammaHyper,
    mode: str = INVERSE_FREE,
    max_iter: int = 50,
    tol: float = 1e-4,
    state: VBIState | None = None,
    track_free_energy: bool = False,
    x_steps: int = 1,
    warmup_steps: int = WARMUP_STEPS,
) -> VBIResult:
    """Cycle the x, rho, s and gamma updates until the mean stabilizes.

    In inverse-free mode each cycle takes ``x_steps`` majorized mean steps
    before the hyper-parameters move; a cold start (``state`` None) takes
    ``warmup_steps`` instead on its first cycle.

    Pass ``state`` to warm-start from a previous run (e.g. the previous outer
    iteration). Divergence, i.e. the data residual growing tenfold within five
    iterations, stops the loop and returns the best iterate seen.
    """
    if mode not in (EXACT, INVERSE_FREE):
        raise ValueError(f"unknown VBI mode {mode!r}")
    if x_steps < 1:
        raise ValueError("x_steps must be at least 1")
    if F.shape[0] != y.size:
        raise ValueError(f"F has {F.shape[0]} rows but y has {y.size} entries")
    Q = F.shape[1]
    cold = state is None
    if cold:
        state = init_state(Q, y, lam_prior, hyper)
    state.flags = []

    FH = F.conj().T
    G = FH @ F if mode == EXACT else None
    Fhy = FH @ y if mode == EXACT else None
    lmax = spectral_bound(F, FH=FH) if mode == INVERSE_FREE else None
    col_energy = np.sum(F.real**2 + F.imag**2, axis=0)
    y_energy = float(np.vdot(y, y).real)

    trace, residuals = [], []
    best, best_res = state.copy(), np.inf
    r = y - F @ state.mu
    it = 0
    for it in range(1, max_iter + 1):
        prev = state.mu.copy()
        if mode == EXACT:
            update_x_exact(state, F, y, G, Fhy)
        else:
            # same step as update_x_inverse_free, reusing the cached residual
            prec = state.gamma * lmax + state.rho
            for _ in range(max(x_steps, warmup_steps) if cold and it == 1 else x_steps):
                state.mu = state.mu + (state.gamma * (FH @ r) - state.rho * state.mu) / prec
                r = y - F @ state.mu
            state.var = 1.0 / prec
            state.Sigma = None
        if mode == EXACT:
            r = y - F @ state.mu
        res = float(np.vdot(r, r).real)
        update_rho(state, hyper)
        update_s(state, lam_prior, hyper)
        state.c_t = hyper.c + y.size
        if state.Sigma is not None:
            state.d_t = hyper.d + res + float(np.real(np.sum(G * state.Sigma.T)))
        else:
            state.d_t = hyper.d + res + float(np.sum(col_energy * state.var))
        if track_free_energy:
            trace.append(free_energy(state, F, y, lam_prior, hyper, G))

        residuals.append(res)
        if res < best_res:
            best, best_res = state.copy(), res
        if len(residuals) > 5 and res > 10 * residuals[-6] and res > 1e-12 * y_energy:
            log.warning("VBI residual diverging at iteration %d", it)
            best.flags.append("diverged")
            state = best
            break
        change = np.linalg.norm(state.mu - prev) / max(np.linalg.norm(state.mu), 1e-30)
        if change < tol:
            break
    return VBIResult(
        x=state.mu.copy(), gamma=state.gamma, q_s=state.lam.copy(), state=state,
        iterations=it, free_energy=trace, flags=list(state.flags),
    )
