"""Frame-by-frame tracking: alternate channel estimation, VR detection and grid
refinement within a frame, then predict the priors of the next frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import priors
from .channel import SystemConfig
from .grid import GridConfig, PolarDelayGrid, build_basis, build_transform, initial_grid
from .priors import GammaHyper, TemporalPrior
from .refine import armijo_refine
from .scenario import PriorParams
from .turbo_cs import run_turbo_cs
from .vbi import EXACT, INVERSE_FREE, VBIState, run_vbi


MARKOV = "markov"
IID = "iid"


@dataclass(frozen=True)
class TrackerConfig:
    """Iteration budgets and switches.

    ``I`` outer iterations per frame, ``I1`` VBI iterations and ``I2`` turbo
    iterations per outer iteration, ``refine_steps`` Armijo rounds.
    """

    I: int = 10
    I1: int = 30
    I2: int = 10
    refine_steps: int = 3
    refine_scaled: bool = False
    mode: str = MARKOV
    vbi_mode: str = INVERSE_FREE
    tol_x: float = 2e-2
    tol_u: float = 2e-2
    vbi_tol: float = 1e-4
    turbo_tol: float = 1e-4
    eta_rel: float = 0.05
    eta_floor: float = 10.0
    hyper: GammaHyper = field(default_factory=GammaHyper)

    def __post_init__(self):
        if min(self.I, self.I1, self.I2) < 1:
            raise ValueError("iteration budgets must be at least 1")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be non-negative")
        if self.mode not in (MARKOV, IID):
            raise ValueError(f"mode must be {MARKOV!r} or {IID!r}")
        if self.vbi_mode not in (EXACT, INVERSE_FREE):
            raise ValueError(f"vbi_mode must be {EXACT!r} or {INVERSE_FREE!r}")


@dataclass
class FrameResult:
    """Estimates of one frame.

    ``U`` is (M, Q) and zero off ``omega``; ``h`` is the reconstructed channel
    as an MN vector. ``p_alpha``, ``beta_mean`` and ``beta_var`` are (Q, M).
    """

    x: np.ndarray
    U: np.ndarray
    grid: PolarDelayGrid
    q_s: np.ndarray
    p_alpha: np.ndarray
    beta_mean: np.ndarray
    beta_var: np.ndarray
    omega: np.ndarray
    h: np.ndarray
    gamma: float
    iterations: int
    h_trace: list = field(default_factory=list)
    flags: list = field(default_factory=list)


@dataclass
class WarmStart:
    U: np.ndarray
    grid: PolarDelayGrid


def _rel_change(new, old) -> float:
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(new), 1e-30))


def vbi_transform(B: np.ndarray, U: np.ndarray, omega: np.ndarray | None) -> np.ndarray:
    """Transform seen by the channel estimator: detected VRs on ``omega``, full visibility elsewhere.

    Points outside the filter set keep unit visibility so that new paths can
    still be picked up by the estimator.
    """
    if omega is None:
        return build_transform(B, U)
    V = np.ones_like(U)
    V[:, omega] = U[:, omega]
    return build_transform(B, V)


def track_frame(
    y: np.ndarray,
    warm: WarmStart,
    prior: TemporalPrior,
    cfg: SystemConfig,
    pp: PriorParams,
    tcfg: TrackerConfig,
    omega: np.ndarray | None = None,
) -> FrameResult:
    """Run up to ``tcfg.I`` outer iterations on one decoded observation ``y``.

    ``omega`` is the filter set that ``warm.U`` was detected on (None on a cold
    start, meaning ``warm.U`` is used as given).
    """
    Y = y.reshape((cfg.N, cfg.M), order="F")
    grid = warm.grid.copy()
    U_full = warm.U.copy()
    markov = tcfg.mode == MARKOV
    lam = prior.lam if markov else np.full(grid.Q, priors.steady_state_support(pp.support))
    tprior = prior if markov else priors.initial_prior(grid.Q, cfg.M, pp.support, pp.vr, pp.values)

    state: VBIState | None = None
    flags: list = []
    x_prev = None
    U_prev = U_full.copy()
    trace = []
    vr = None
    B = build_basis(grid, cfg)
    it = 0
    for it in range(1, tcfg.I + 1):
        F = vbi_transform(B, U_full, omega)
        res = run_vbi(y, F, lam, tcfg.hyper, mode=tcfg.vbi_mode, max_iter=tcfg.I1, tol=tcfg.vbi_tol, state=state)
        state = res.state
        flags += [f"vbi:{f}" for f in res.flags]
        x = res.x
        trace.append(F @ x)

        N = cfg.N
        peak = float(np.max(np.abs(x) ** 2))
        eta = max(tcfg.eta_rel * peak, tcfg.eta_floor / (res.gamma * N))
        vr = run_turbo_cs(B, x, y, res.gamma, tprior, pp.vr, cfg.M, eta=eta if eta > 0 else None,
                          max_iter=tcfg.I2, tol=tcfg.turbo_tol, markov=markov)
        flags += [f"turbo:{f}" for f in vr.flags]
        if vr.omega.size:
            omega = vr.omega
            U_full = vr.U
        if tcfg.refine_steps and omega is not None and omega.size:
            V = np.ones_like(U_full)
            V[:, omega] = U_full[:, omega]
            rs = armijo_refine(grid, x, V, res.gamma, Y, cfg, active=omega, max_steps=tcfg.refine_steps,
                               scaled=tcfg.refine_scaled)
            if rs.accepted:
                grid = rs.grid
                B = build_basis(grid, cfg)

        done = (
            x_prev is not None
            and _rel_change(x, x_prev) < tcfg.tol_x
            and _rel_change(U_full, U_prev) < tcfg.tol_u
        )
        x_prev, U_prev = x.copy(), U_full.copy()
        if done:
            break

    F = vbi_transform(B, U_full, omega)
    h = F @ state.mu
    U_out = np.zeros_like(U_full)
    if omega is not None and omega.size:
        U_out[:, omega] = U_full[:, omega]
    return FrameResult(
        x=state.mu.copy(), U=U_out, grid=grid, q_s=state.lam.copy(),
        p_alpha=vr.p_alpha, beta_mean=vr.beta_mean, beta_var=vr.beta_var,
        omega=np.array([], dtype=int) if omega is None else omega,
        h=h, gamma=state.gamma, iterations=it, h_trace=trace, flags=flags,
    )


def temporal_update(result: FrameResult, pp: PriorParams, mode: str = MARKOV) -> TemporalPrior:
    """Prior of the next frame from this frame's posteriors."""
    Q, M = result.p_alpha.shape
    if mode == IID:
        return priors.initial_prior(Q, M, pp.support, pp.vr, pp.values)
    lam = priors.predict_support(result.q_s, pp.support)
    pi = priors.predict_alpha(result.p_alpha, pp.vr, result.omega)
    mu, nu = priors.predict_beta(result.beta_mean, result.beta_var, pp.values, result.omega)
    return TemporalPrior(lam=lam, pi=pi, mu=mu, nu=nu)


def track_sequence(
    observations,
    cfg: SystemConfig,
    gcfg: GridConfig,
    pp: PriorParams,
    tcfg: TrackerConfig,
    callback=None,
) -> list[FrameResult]:
    """Track a sequence of decoded observation vectors.

    The first frame starts from the steady-state priors, all-ones VRs and the
    initial grid; later frames start from the previous frame's refined grid
    and VRs. ``callback(t, result)`` is invoked after every frame.
    """
    grid = initial_grid(gcfg, cfg)
    prior = priors.initial_prior(grid.Q, cfg.M, pp.support, pp.vr, pp.values)
    warm = WarmStart(U=np.ones((cfg.M, grid.Q)), grid=grid)
    omega = None
    out = []
    for t, y in enumerate(observations):
        res = track_frame(np.asarray(y), warm, prior, cfg, pp, tcfg, omega=omega)
        out.append(res)
        if callback is not None:
            callback(t, res)
        prior = temporal_update(res, pp, tcfg.mode)
        warm = WarmStart(U=res.U, grid=res.grid)
        omega = res.omega if res.omega.size else None
    return out
