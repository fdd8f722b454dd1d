"""Encoded sub-array hybrid beamforming: pilot mixing and per-antenna extraction.

Every RF chain ``k`` drives the contiguous antenna block
``k*M_sub .. (k+1)*M_sub - 1``. On pilot ``p`` all chains use the same
phase-shifter vector, row ``p`` of the code matrix ``D_P`` (first ``M_sub``
columns of the P-point DFT). Because ``D_P^H D_P = P I``, the antenna signals
are recovered by a matched filter over the pilot axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelFrame, SystemConfig, vec


@dataclass
class PhaseShifterCode:
    """Unit-modulus code matrix, shape (P, M_sub); row p is the pilot-p phase vector."""

    D: np.ndarray

    @property
    def P(self) -> int:
        return self.D.shape[0]

    @property
    def M_sub(self) -> int:
        return self.D.shape[1]


@dataclass
class PilotObservation:
    """Raw RF-chain outputs.

    Attributes:
        y: received samples, shape (P, N, N_RF).
        pilots: pilot symbols with unit modulus, shape (P, N).
        noise_var: per-antenna noise variance before mixing (``1/gamma_z``).
    """

    y: np.ndarray
    pilots: np.ndarray
    noise_var: float = 0.0


@dataclass
class DecodedObservation:
    """Per-antenna observations ``y_tilde = h + z_tilde`` stacked as an MN vector."""

    y: np.ndarray
    noise_var: float
    N: int
    M: int

    @property
    def Y(self) -> np.ndarray:
        return self.y.reshape((self.N, self.M), order="F")

    @property
    def precision(self) -> float:
        return np.inf if self.noise_var == 0 else 1.0 / self.noise_var


def encode_phase_shifters(cfg: SystemConfig) -> PhaseShifterCode:
    if cfg.P < cfg.M_sub:
        raise ValueError(f"P={cfg.P} < M_sub={cfg.M_sub}: antenna signals cannot be separated")
    p = np.arange(cfg.P)[:, None]
    i = np.arange(cfg.M_sub)[None, :]
    return PhaseShifterCode(np.exp(-2j * np.pi * p * i / cfg.P))


def unit_pilots(cfg: SystemConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Pilot symbols, all ones by default or random unit-modulus phases if ``rng`` is given."""
    if rng is None:
        return np.ones((cfg.P, cfg.N), dtype=complex)
    return np.exp(2j * np.pi * rng.random((cfg.P, cfg.N)))


def _split_subarrays(X: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    # (..., M) -> (..., N_RF, M_sub)
    return X.reshape(X.shape[:-1] + (cfg.N_RF, cfg.M_sub))


def mix(
    frame: ChannelFrame,
    code: PhaseShifterCode,
    pilots: np.ndarray,
    noise: np.ndarray | None,
    cfg: SystemConfig,
    noise_var: float = 0.0,
) -> PilotObservation:
    """Analog combining ``y_{p,k}[n] = w_{p,k}^T (h_sub-k[n] v_p[n] + z_{p,sub-k}[n])``.

    Args:
        frame: channel with ``H`` of shape (N, M).
        code: phase-shifter code; row p is applied to every sub-array on pilot p.
        pilots: unit-modulus pilots, shape (P, N).
        noise: per-antenna noise realization, shape (P, N, M), or None.
        noise_var: variance the noise realization was drawn with (bookkeeping only).
    """
    H = np.asarray(frame.H)
    if H.shape != (cfg.N, cfg.M):
        raise ValueError(f"channel shape {H.shape} != ({cfg.N}, {cfg.M})")
    if pilots.shape != (cfg.P, cfg.N):
        raise ValueError(f"pilot shape {pilots.shape} != ({cfg.P}, {cfg.N})")
    if code.D.shape != (cfg.P, cfg.M_sub):
        raise ValueError(f"code shape {code.D.shape} != ({cfg.P}, {cfg.M_sub})")
    rx = H[None, :, :] * pilots[:, :, None]
    if noise is not None:
        if noise.shape != (cfg.P, cfg.N, cfg.M):
            raise ValueError(f"noise shape {noise.shape} != ({cfg.P}, {cfg.N}, {cfg.M})")
        rx = rx + noise
    y = np.einsum("pnki,pi->pnk", _split_subarrays(rx, cfg), code.D)
    return PilotObservation(y=y, pilots=pilots, noise_var=noise_var)


def decode(obs: PilotObservation, code: PhaseShifterCode, cfg: SystemConfig) -> DecodedObservation:
    """Matched-filter extraction ``(1/P) D_P^H [y_{p,k}/v_p]_p`` for every chain and subcarrier.

    The decoded noise variance is ``noise_var * M_sub / P``.
    """
    if obs.y.shape != (cfg.P, cfg.N, cfg.N_RF):
        raise ValueError(f"observation shape {obs.y.shape} != ({cfg.P}, {cfg.N}, {cfg.N_RF})")
    if code.D.shape != (cfg.P, cfg.M_sub):
        raise ValueError(f"code shape {code.D.shape} != ({cfg.P}, {cfg.M_sub})")
    z = obs.y / obs.pilots[:, :, None]
    sub = np.einsum("pi,pnk->nki", code.D.conj(), z) / cfg.P
    Y = sub.reshape(cfg.N, cfg.M)
    return DecodedObservation(
        y=vec(Y), noise_var=obs.noise_var * cfg.M_sub / cfg.P, N=cfg.N, M=cfg.M
    )
