"""Numerical oracles shared by the ``verify`` command and the test suite.

Each function returns the measured quantity; thresholds live with the caller.
"""

from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np

from . import hbf, priors
from .channel import ChannelFrame, PathParams, SystemConfig, synthesize_channel
from .grid import GridConfig, PolarDelayGrid, build_basis, build_transform, initial_grid
from .metrics import channel_nmse, to_db
from .priors import GammaHyper, VRMarkovParams
from .refine import BLOCKS, gradient_block, log_likelihood, resolution
from .scenario import PriorParams
from .turbo_cs import GaussMsg, run_turbo_cs, spike_slab_markov_module_b
from .vbi import EXACT, INVERSE_FREE, run_vbi


def random_channel(cfg: SystemConfig, rng) -> ChannelFrame:
    H = rng.normal(size=(cfg.N, cfg.M)) + 1j * rng.normal(size=(cfg.N, cfg.M))
    return ChannelFrame(H)


def hbf_roundtrip_error(cfg: SystemConfig, rng, trials: int = 5) -> float:
    """Worst relative error of noiseless mix + decode over random channels and pilots."""
    code = hbf.encode_phase_shifters(cfg)
    worst = 0.0
    for _ in range(trials):
        frame = random_channel(cfg, rng)
        obs = hbf.decode(hbf.mix(frame, code, hbf.unit_pilots(cfg, rng), None, cfg), code, cfg)
        worst = max(worst, float(np.linalg.norm(obs.y - frame.h) / np.linalg.norm(frame.h)))
    return worst


def decoded_noise_ratio(cfg: SystemConfig, rng, draws: int = 100_000, sigma2: float = 1.0) -> float:
    """Empirical decoded noise variance over ``sigma2 * M_sub / P``; ideally 1."""
    code = hbf.encode_phase_shifters(cfg)
    zero = ChannelFrame(np.zeros((cfg.N, cfg.M), dtype=complex))
    pilots = hbf.unit_pilots(cfg, rng)
    total, count = 0.0, 0
    shape = (cfg.P, cfg.N, cfg.M)
    while count < draws:
        z = np.sqrt(sigma2 / 2) * (rng.normal(size=shape) + 1j * rng.normal(size=shape))
        y = hbf.decode(hbf.mix(zero, code, pilots, z, cfg), code, cfg).y
        total += float(np.sum(np.abs(y) ** 2))
        count += y.size
    return (total / count) / (sigma2 * cfg.M_sub / cfg.P)


def random_refine_instance(cfg: SystemConfig, rng, Q: int = 6):
    """Random off-grid points, gains, VRs and observation for gradient checks."""
    grid = PolarDelayGrid(
        theta=rng.uniform(-0.9, 0.9, Q),
        kappa=rng.uniform(0.02, 0.4, Q),
        tau=rng.uniform(0.1, 0.9, Q) * cfg.tau_max,
        tau_max=cfg.tau_max,
        kappa_scale=2.0,
        kappa_max=0.5,
    )
    x = rng.normal(size=Q) + 1j * rng.normal(size=Q)
    U = rng.uniform(0.0, 2.0, size=(cfg.M, Q))
    Y = rng.normal(size=(cfg.N, cfg.M)) + 1j * rng.normal(size=(cfg.N, cfg.M))
    gamma = float(rng.uniform(0.5, 2.0))
    return grid, x, U, gamma, Y


def gradient_errors(cfg: SystemConfig, rng, instances: int = 100, rel_step: float = 1e-4) -> dict:
    """Worst relative error of each analytic block gradient against central differences."""
    res = resolution(cfg)
    worst = {b: 0.0 for b in BLOCKS}
    for _ in range(instances):
        grid, x, U, gamma, Y = random_refine_instance(cfg, rng)
        for block in BLOCKS:
            g = gradient_block(grid, block, x, U, gamma, Y, cfg)
            h = rel_step * res[block]
            fd = np.empty_like(g)
            for q in range(grid.Q):
                plus, minus = grid.copy(), grid.copy()
                getattr(plus, block)[q] += h
                getattr(minus, block)[q] -= h
                fd[q] = (log_likelihood(plus, x, U, gamma, Y, cfg) - log_likelihood(minus, x, U, gamma, Y, cfg)) / (2 * h)
            worst[block] = max(worst[block], float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    return worst


def _log_normal(x, mean, var):
    return -0.5 * np.log(2 * np.pi * var) - 0.5 * (x - mean) ** 2 / var


def enumerate_module_b(obs, v, pi, mu, nu, params: VRMarkovParams):
    """Exact ``P(alpha_m = 1)`` and ``E[u_m]`` for one chain by summing all 2^M supports."""
    M = obs.size
    T = np.array([[1 - params.p01S, params.p01S], [params.p10S, 1 - params.p10S]])
    ll0 = np.log(1 - pi) + _log_normal(obs, 0.0, v)
    ll1 = np.log(pi) + _log_normal(obs, mu, nu + v)
    v1 = 1.0 / (1.0 / nu + 1.0 / v)
    m1 = v1 * (mu / nu + obs / v)
    configs = np.array(list(itertools.product((0, 1), repeat=M)))
    logw = np.where(configs == 1, ll1, ll0).sum(axis=1)
    logw += np.log(T[configs[:, :-1], configs[:, 1:]]).sum(axis=1)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    p1 = w @ configs
    return p1, p1 * m1


def module_b_error(M: int, rng, chains: int = 3) -> float:
    """Largest gap between the chain denoiser and exhaustive enumeration."""
    params = VRMarkovParams(p01S=float(rng.uniform(0.02, 0.4)), p10S=float(rng.uniform(0.02, 0.4)))
    shape = (chains, M)
    obs = rng.normal(0.5, 1.0, size=shape)
    v = rng.uniform(0.05, 1.0, size=shape)
    pi = rng.uniform(0.1, 0.9, size=shape)
    mu = rng.uniform(0.5, 1.5, size=shape)
    nu = rng.uniform(0.1, 1.0, size=shape)
    p1, _, _, post = spike_slab_markov_module_b(GaussMsg(obs, v), pi, mu, nu, params)
    worst = 0.0
    for k in range(chains):
        ref_p, ref_u = enumerate_module_b(obs[k], v[k], pi[k], mu[k], nu[k], params)
        worst = max(worst, float(np.max(np.abs(p1[k] - ref_p))), float(np.max(np.abs(post.mean[k] - ref_u))))
    return worst


VBI_ORACLE_SYSTEM = SystemConfig(M=32, N_RF=8, N=16, P=4)
# far-field only: at M=32 every near-field ring falls below r_min
VBI_ORACLE_GRID = GridConfig(Q1=16, Q2=4, n_rings=0)


def vbi_instance(seed: int, snr_db: float = 10.0, n_paths: int = 3):
    """On-grid sparse gains seen through random visibility regions, plus noise at ``snr_db``.

    Returns ``(y, F, lam_prior)``.
    """
    cfg = VBI_ORACLE_SYSTEM
    rng = np.random.default_rng(seed)
    pp = PriorParams()
    B = build_basis(initial_grid(VBI_ORACLE_GRID, cfg), cfg)
    Q = B.shape[1]
    support = rng.choice(Q, n_paths, replace=False)
    x = np.zeros(Q, dtype=complex)
    x[support] = (rng.normal(size=n_paths) + 1j * rng.normal(size=n_paths)) / np.sqrt(2)
    U = np.ones((cfg.M, Q))
    for q in support:
        alpha = priors.sample_vr_frame(None, pp.vr, cfg.M, rng)[0]
        if not alpha.any():
            alpha[:] = True
        U[:, q] = alpha * rng.uniform(0.5, 1.5, cfg.M)
    F = build_transform(B, U)
    h = F @ x
    sigma2 = float(np.vdot(h, h).real) / h.size / 10 ** (snr_db / 10)
    y = h + np.sqrt(sigma2 / 2) * (rng.normal(size=h.size) + 1j * rng.normal(size=h.size))
    return y, F, np.full(Q, priors.steady_state_support(pp.support))


def vbi_mode_gap(seed: int, snr_db: float = 10.0, max_iter: int = 3000, tol: float = 1e-10) -> float:
    """``||h_if - h_exact||^2 / ||h_exact||^2`` (linear), both modes run to convergence."""
    y, F, lam = vbi_instance(seed, snr_db)
    hyper = GammaHyper()
    h_ex = F @ run_vbi(y, F, lam, hyper, mode=EXACT, max_iter=max_iter, tol=tol).x
    h_if = F @ run_vbi(y, F, lam, hyper, mode=INVERSE_FREE, max_iter=max_iter, tol=tol).x
    return float(np.sum(np.abs(h_if - h_ex) ** 2) / np.sum(np.abs(h_ex) ** 2))


def exact_recovery(seed: int, cfg: SystemConfig | None = None, gcfg: GridConfig | None = None) -> tuple[float, float]:
    """Channel and VR NMSE (dB) for a noiseless single path sitting on a grid point with known VR.

    The channel is estimated by exact-inverse VBI on the true transform, then
    Turbo-CS re-detects the VR from that estimate.
    """
    cfg = cfg or SystemConfig()
    gcfg = gcfg or GridConfig(angle_range=(-0.5, 0.5))
    rng = np.random.default_rng(seed)
    grid = initial_grid(gcfg, cfg)
    q = int(rng.integers(grid.Q))
    path = PathParams(complex(rng.normal(), rng.normal()), float(grid.theta[q]), 1.0 / float(grid.kappa[q]), float(grid.tau[q]))
    pp = PriorParams()
    support = priors.sample_vr_frame(None, replace(pp.vr, kappa=0.6), cfg.M, rng)[0]
    if not support.any():
        support[cfg.M // 2] = True
    u = np.where(support, rng.uniform(0.5, 1.5, cfg.M), 0.0)
    h = synthesize_channel([path], [u], cfg).h

    U = np.ones((cfg.M, grid.Q))
    U[:, q] = u
    B = build_basis(grid, cfg)
    lam = np.full(grid.Q, priors.steady_state_support(pp.support))
    res = run_vbi(h, build_transform(B, U), lam, GammaHyper(), mode=EXACT, max_iter=200, tol=1e-12)
    h_nmse = channel_nmse(build_transform(B, U) @ res.x, h)

    prior = priors.initial_prior(grid.Q, cfg.M, pp.support, pp.vr, pp.values)
    x = np.zeros(grid.Q, dtype=complex)
    x[q] = res.x[q]
    vr = run_turbo_cs(B, x, h, res.gamma, prior, pp.vr, cfg.M, max_iter=50, tol=1e-12)
    u_hat = vr.U[:, q]
    return h_nmse, to_db(float(np.sum((u_hat - u) ** 2) / np.sum(u**2)))
