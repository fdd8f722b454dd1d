"""Off-grid refinement of the polar-delay grid by block gradient ascent.

The three blocks are angle cosine, inverse distance and delay. Each block
takes one projected gradient step per round with an Armijo backtracking
line search on the Gaussian log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import SystemConfig
from .grid import PolarDelayGrid, build_basis, build_transform, delay_matrix, steering_matrix

BLOCKS = ("theta", "kappa", "tau")
KAPPA_FLOOR = 1e-9


def _residual(grid, x_hat, U, Y, cfg):
    A = steering_matrix(grid, cfg) * U
    D = delay_matrix(grid, cfg)
    return Y - (D * x_hat) @ A.T, A, D


def log_likelihood(grid: PolarDelayGrid, x_hat: np.ndarray, U: np.ndarray, gamma: float,
                   Y: np.ndarray, cfg: SystemConfig) -> float:
    """``-gamma ||y - F(grid, U) x_hat||^2``; ``Y`` is the (N, M) observation."""
    R, _, _ = _residual(grid, x_hat, U, Y, cfg)
    return float(-gamma * np.sum(np.abs(R) ** 2))


def log_likelihood_vec(grid, x_hat, U, gamma, y, cfg) -> float:
    """Same value through the vectorized basis, as an independent code path."""
    r = y - build_transform(build_basis(grid, cfg), U) @ x_hat
    return float(-gamma * np.vdot(r, r).real)


def phase_derivative(grid: PolarDelayGrid, block: str, cfg: SystemConfig) -> np.ndarray:
    """Derivative of the steering (M, Q) or delay (N, Q) phase w.r.t. one block."""
    k = 2 * np.pi / cfg.wavelength
    dd = (cfg.delta * cfg.d)[:, None]
    if block == "theta":
        return -k * (-dd - dd**2 * grid.theta * grid.kappa)
    if block == "kappa":
        return -k * dd**2 * (1 - grid.theta**2) / 2 * np.ones_like(grid.kappa)
    if block == "tau":
        n = np.arange(1, cfg.N + 1)[:, None]
        return -2 * np.pi * n * cfg.f_0 * np.ones_like(grid.tau)
    raise ValueError(f"unknown block {block!r}")


def gradient_block(grid: PolarDelayGrid, block: str, x_hat: np.ndarray, U: np.ndarray, gamma: float,
                   Y: np.ndarray, cfg: SystemConfig, active: np.ndarray | None = None) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood` w.r.t. one parameter block, length Q.

    Entries outside ``active`` (all points by default) are zero.
    """
    R, A, D = _residual(grid, x_hat, U, Y, cfg)
    dphi = phase_derivative(grid, block, cfg)
    if block == "tau":
        C = R.conj().T @ (D * (1j * dphi))
        inner = np.sum(A * C, axis=0)
    else:
        C = R.conj().T @ D
        inner = np.sum(A * (1j * dphi) * C, axis=0)
    g = 2 * gamma * np.real(x_hat * inner)
    if active is not None:
        mask = np.zeros(g.size, dtype=bool)
        mask[np.asarray(active, dtype=int)] = True
        g[~mask] = 0.0
    return g


def initial_steps(cfg: SystemConfig) -> dict:
    return {
        "theta": 1e-2,
        "kappa": 1e-2 * 2 * cfg.wavelength / (cfg.M**2 * cfg.d**2),
        "tau": 0.1 / (cfg.N * cfg.f_0),
    }


def project(grid: PolarDelayGrid) -> PolarDelayGrid:
    grid.theta = np.clip(grid.theta, -1.0, 1.0)
    grid.kappa = np.clip(grid.kappa, KAPPA_FLOOR, grid.kappa_max)
    grid.tau = np.clip(grid.tau, 0.0, grid.tau_max)
    return grid


def resolution(cfg: SystemConfig) -> dict:
    """Roughly one resolution cell per block, used to cap scaled steps."""
    return {
        "theta": 2.0 / cfg.M,
        "kappa": 2 * cfg.wavelength / (cfg.M**2 * cfg.d**2),
        "tau": 1.0 / (cfg.N * cfg.f_0),
    }


def curvature_block(grid: PolarDelayGrid, block: str, x_hat: np.ndarray, U: np.ndarray, gamma: float,
                    cfg: SystemConfig) -> np.ndarray:
    """Gauss-Newton diagonal ``2 gamma |x_q|^2 ||d f_q / d p_q||^2`` per grid point."""
    dphi = phase_derivative(grid, block, cfg)
    u2 = U**2
    if block == "tau":
        energy = np.sum(dphi**2, axis=0) * np.sum(u2, axis=0) / cfg.M
    else:
        energy = cfg.N * np.sum(u2 * dphi**2, axis=0) / cfg.M
    return 2 * gamma * np.abs(x_hat) ** 2 * energy


@dataclass
class RefineState:
    grid: PolarDelayGrid
    steps: dict
    trace: list = field(default_factory=list)
    accepted: int = 0


def armijo_refine(
    grid: PolarDelayGrid,
    x_hat: np.ndarray,
    U: np.ndarray,
    gamma: float,
    Y: np.ndarray,
    cfg: SystemConfig,
    active: np.ndarray | None = None,
    max_steps: int = 5,
    steps: dict | None = None,
    shrink: float = 0.5,
    c1: float = 1e-4,
    max_backtracks: int = 20,
    scaled: bool = False,
) -> RefineState:
    """Cycle the blocks for up to ``max_steps`` rounds; stop early when no block improves.

    By default steps are normalized so the largest coordinate move equals
    the block step size, which doubles after an accepted step (capped at 10x
    its initial value). With ``scaled`` the ascent direction is instead the
    gradient divided by the Gauss-Newton diagonal, capped at one resolution
    cell per point, and the line search starts from the full step. Only points in
    ``active`` move. The returned ``trace`` holds the likelihood after every
    accepted step and never decreases.
    """
    if active is not None:
        # frozen columns only shift the observation; refine the active sub-grid
        active = np.asarray(active, dtype=int)
        frozen = np.setdiff1d(np.arange(grid.Q), active)
        sub = lambda g, idx: replace(g, theta=g.theta[idx], kappa=g.kappa[idx], tau=g.tau[idx])
        R0, _, _ = _residual(sub(grid, frozen), x_hat[frozen], U[:, frozen], Y, cfg)
        inner = armijo_refine(sub(grid, active), x_hat[active], U[:, active], gamma, R0, cfg,
                              None, max_steps, steps, shrink, c1, max_backtracks, scaled)
        full = grid.copy()
        full.theta[active], full.kappa[active], full.tau[active] = (
            inner.grid.theta, inner.grid.kappa, inner.grid.tau)
        inner.grid = full
        return inner

    state = RefineState(grid=grid.copy(), steps=dict(steps or initial_steps(cfg)))
    cur = log_likelihood(state.grid, x_hat, U, gamma, Y, cfg)
    state.trace.append(cur)
    base = initial_steps(cfg)
    cap = resolution(cfg)
    for _ in range(max_steps):
        improved = False
        for block in BLOCKS:
            g = gradient_block(state.grid, block, x_hat, U, gamma, Y, cfg)
            gmax = float(np.max(np.abs(g)))
            if gmax == 0 or not np.isfinite(gmax):
                continue
            if scaled:
                H = curvature_block(state.grid, block, x_hat, U, gamma, cfg)
                direction = np.clip(np.divide(g, H, out=np.zeros_like(g), where=H > 0), -cap[block], cap[block])
                eps = 1.0
            else:
                direction = g / gmax
                eps = state.steps[block]
            old = getattr(state.grid, block).copy()
            for _ in range(max_backtracks):
                trial = state.grid.copy()
                setattr(trial, block, old + eps * direction)
                project(trial)
                val = log_likelihood(trial, x_hat, U, gamma, Y, cfg)
                moved = getattr(trial, block) - old
                if val >= cur + c1 * float(np.dot(g, moved)) and val > cur:
                    state.grid, cur = trial, val
                    state.trace.append(cur)
                    state.accepted += 1
                    improved = True
                    if not scaled:
                        state.steps[block] = min(2 * eps, 10 * base[block])
                    break
                eps *= shrink
            else:
                if not scaled:
                    # floored so repeated failures cannot underflow the step
                    state.steps[block] = max(eps, base[block] * shrink**max_backtracks)
        if not improved:
            break
    return state
