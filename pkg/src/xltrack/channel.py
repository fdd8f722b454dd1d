"""Near-field channel mathematics for a half-wavelength ULA.

Antenna ``m`` (1-based) sits at ``delta_m * d`` with ``delta_m = m - (M+1)/2``,
so the array is centered on the origin. Channels are stored as ``H`` with
shape ``(N, M)`` (subcarrier x antenna) and vectorized column-major, which
puts entry ``(n, m)`` at flat index ``m*N + n`` (0-based).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Array, waveform and pilot dimensions of the uplink system.

    Attributes:
        M: number of antennas.
        N_RF: number of RF chains; each drives ``M // N_RF`` antennas.
        N: number of pilot subcarriers assigned to the user.
        P: pilot sequence length per frame.
        f_c: carrier frequency in Hz.
        f_0: subcarrier spacing in Hz.
        tau_max: delay spread in seconds.
    """

    M: int = 64
    N_RF: int = 16
    N: int = 32
    P: int = 4
    f_c: float = 28e9
    f_0: float = 120e3
    tau_max: float = 1.5e-6

    def __post_init__(self):
        if self.M < 1 or self.N_RF < 1 or self.N < 1 or self.P < 1:
            raise ValueError("M, N_RF, N and P must be positive integers")
        if self.M % self.N_RF:
            raise ValueError(f"M={self.M} is not divisible by N_RF={self.N_RF}")
        if self.P < self.M_sub:
            raise ValueError(f"pilot length P={self.P} is shorter than M_sub={self.M_sub}")
        if self.f_c <= 0 or self.f_0 <= 0 or self.tau_max <= 0:
            raise ValueError("frequencies and delay spread must be strictly positive")

    @property
    def M_sub(self) -> int:
        return self.M // self.N_RF

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def d(self) -> float:
        return self.wavelength / 2

    @property
    def aperture(self) -> float:
        return self.M * self.d

    @property
    def rayleigh_distance(self) -> float:
        return 2 * self.aperture**2 / self.wavelength

    @property
    def delta(self) -> np.ndarray:
        """Relative antenna indices ``m - (M+1)/2`` for m = 1..M."""
        return np.arange(1, self.M + 1) - (self.M + 1) / 2


@dataclass
class PathParams:
    """One propagation path: complex gain, angle cosine, distance and delay."""

    gain: complex
    theta: float
    r: float
    tau: float

    def __post_init__(self):
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError(f"angle cosine {self.theta} outside [-1, 1]")
        if self.r <= 0:
            raise ValueError(f"distance must be positive, got {self.r}")
        if self.tau < 0:
            raise ValueError(f"delay must be non-negative, got {self.tau}")


@dataclass
class ChannelFrame:
    """Frequency-antenna channel of one frame, ``H`` has shape (N, M)."""

    H: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return vec(self.H)

    @classmethod
    def from_vector(cls, h: np.ndarray, N: int, M: int) -> "ChannelFrame":
        return cls(unvec(h, N, M))


def vec(H: np.ndarray) -> np.ndarray:
    return np.asarray(H).reshape(-1, order="F")


def unvec(h: np.ndarray, N: int, M: int) -> np.ndarray:
    return np.asarray(h).reshape((N, M), order="F")


def fresnel_distance(r: float, theta: float, m_index: int, cfg: SystemConfig) -> float:
    """Second-order approximation of the distance from a scatterer to antenna ``m_index``."""
    if r <= 0:
        raise ValueError(f"distance must be positive, got {r}")
    if not 1 <= m_index <= cfg.M:
        raise ValueError(f"antenna index {m_index} outside 1..{cfg.M}")
    delta = m_index - (cfg.M + 1) / 2
    return r - delta * cfg.d * theta + delta**2 * cfg.d**2 * (1 - theta**2) / (2 * r)


def exact_distance(r: float, theta: float, cfg: SystemConfig) -> np.ndarray:
    """Exact scatterer-to-antenna distances for every antenna (spherical wave)."""
    if r <= 0:
        raise ValueError(f"distance must be positive, got {r}")
    x = cfg.delta * cfg.d
    return np.sqrt(r**2 + x**2 - 2 * r * x * theta)


def steering_phase(theta, inv_r, cfg: SystemConfig) -> np.ndarray:
    """Phase of the Fresnel steering vector, shape ``(M,) + broadcast(theta, inv_r).shape``.

    Parameterized by the inverse distance so that the phase is linear in it.
    """
    theta = np.asarray(theta, dtype=float)
    inv_r = np.asarray(inv_r, dtype=float)
    dd = (cfg.delta * cfg.d).reshape((-1,) + (1,) * np.broadcast(theta, inv_r).ndim)
    k = 2 * np.pi / cfg.wavelength
    return -k * (-dd * theta + dd**2 * (1 - theta**2) * inv_r / 2)


def steering_vector(theta, r, cfg: SystemConfig) -> np.ndarray:
    """Fresnel near-field steering vector ``a(theta, r)`` with unit norm.

    ``theta`` and ``r`` may be arrays of equal shape; the antenna axis is
    prepended, so Q grid points give an ``(M, Q)`` matrix.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    if np.any(np.abs(theta) > 1):
        raise ValueError("angle cosine outside [-1, 1]")
    return np.exp(1j * steering_phase(theta, 1.0 / r, cfg)) / np.sqrt(cfg.M)


def exact_steering_vector(theta: float, r: float, cfg: SystemConfig) -> np.ndarray:
    """Uniform-spherical-wave steering vector without the Fresnel approximation."""
    rm = exact_distance(r, theta, cfg)
    return np.exp(-2j * np.pi / cfg.wavelength * (rm - r)) / np.sqrt(cfg.M)


def delay_response(tau, cfg: SystemConfig) -> np.ndarray:
    """Delay response ``exp(-j 2 pi n f_0 tau)`` for n = 1..N, subcarrier axis first."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("delay must be non-negative")
    n = np.arange(1, cfg.N + 1).reshape((-1,) + (1,) * tau.ndim)
    return np.exp(-2j * np.pi * n * cfg.f_0 * tau)


def synthesize_channel(
    paths: Sequence[PathParams], vrs: Sequence[np.ndarray], cfg: SystemConfig
) -> ChannelFrame:
    """Sum of VR-weighted near-field paths on every subcarrier."""
    if len(paths) != len(vrs):
        raise ValueError(f"{len(paths)} paths but {len(vrs)} visibility regions")
    H = np.zeros((cfg.N, cfg.M), dtype=complex)
    for path, u in zip(paths, vrs):
        u = np.asarray(u, dtype=float)
        if u.shape != (cfg.M,):
            raise ValueError(f"VR vector must have shape ({cfg.M},), got {u.shape}")
        if np.any(u < 0):
            raise ValueError("visibility region entries must be non-negative")
        a = steering_vector(path.theta, path.r, cfg) * u
        H += path.gain * np.outer(delay_response(path.tau, cfg), a)
    return ChannelFrame(H)
