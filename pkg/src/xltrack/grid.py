"""Polar-delay dictionary: grid construction, basis ``B``, transform ``F`` and matching.

Grid point ``q`` enumerates delay fastest: ``q = q1 * Q2 + q2`` for polar
point ``q1`` and delay point ``q2``. Distances are carried as inverse
distance ``kappa = 1/r`` (``kappa = 0`` is the far field), which keeps the
steering phase linear in the refined parameter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import PathParams, SystemConfig, delay_response, steering_phase

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridConfig:
    """Sizing of the polar-delay grid.

    ``Q1`` polar points are split into ``Q1 // (n_rings + 1)`` angles, each
    carrying ``n_rings`` near-field distance rings and one far-field point.
    """

    Q1: int = 32
    Q2: int = 8
    n_rings: int = 1
    beta: float = 1.2
    r_min: float = 2.0
    r_far_factor: float = 10.0
    angle_range: tuple[float, float] = (-1.0, 1.0)

    @property
    def Q(self) -> int:
        return self.Q1 * self.Q2


@dataclass
class PolarDelayGrid:
    """Per-point angle cosine, inverse distance and delay, each of length Q."""

    theta: np.ndarray
    kappa: np.ndarray
    tau: np.ndarray
    tau_max: float
    kappa_scale: float = 1.0
    kappa_max: float = field(default=np.inf)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.kappa = np.asarray(self.kappa, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        if not (self.theta.shape == self.kappa.shape == self.tau.shape) or self.theta.ndim != 1:
            raise ValueError("theta, kappa and tau must be 1-D arrays of equal length")

    @property
    def Q(self) -> int:
        return self.theta.size

    @property
    def r(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.kappa

    def copy(self) -> "PolarDelayGrid":
        return replace(self, theta=self.theta.copy(), kappa=self.kappa.copy(), tau=self.tau.copy())

    def as_array(self) -> np.ndarray:
        return np.stack([self.theta, self.kappa, self.tau], axis=1)


def ring_distances(theta: float, n_rings: int, cfg: SystemConfig, beta: float = 1.2) -> np.ndarray:
    """Near-field sampling rings ``r_s = (1 - theta^2) M^2 d^2 / (2 lambda s beta^2)``, s = 1..n_rings.

    Rings collapse at end-fire (``theta = +-1``), where an empty array is returned.
    """
    scale = (1 - theta**2) * cfg.M**2 * cfg.d**2 / (2 * cfg.wavelength * beta**2)
    if scale <= 0:
        return np.empty(0)
    return scale / np.arange(1, n_rings + 1)


def generate_polar_grid(
    gcfg: GridConfig, cfg: SystemConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Polar sampling points as (theta, kappa) arrays of length ``Q1``.

    Angles are uniform in the cosine domain (cell midpoints, so end-fire is
    never hit); every angle gets ``n_rings`` rings plus a far-field point at
    ``r_far_factor`` Rayleigh distances.
    """
    per_angle = gcfg.n_rings + 1
    if gcfg.Q1 < 1 or gcfg.Q1 % per_angle:
        raise ValueError(f"Q1={gcfg.Q1} is not a multiple of n_rings+1={per_angle}")
    if gcfg.r_min <= 0:
        raise ValueError("r_min must be positive")
    n_angles = gcfg.Q1 // per_angle
    lo, hi = gcfg.angle_range
    edges = np.linspace(lo, hi, n_angles + 1)
    angles = (edges[:-1] + edges[1:]) / 2
    r_far = gcfg.r_far_factor * cfg.rayleigh_distance
    theta, kappa = [], []
    clamped = 0
    for th in angles:
        rings = ring_distances(th, gcfg.n_rings, cfg, gcfg.beta)
        clamped += int(np.sum(rings < gcfg.r_min))
        rings = np.maximum(rings, gcfg.r_min)
        theta.extend([th] * per_angle)
        kappa.extend([1.0 / r_far] + list(1.0 / rings))
    if clamped:
        log.warning("%d of %d rings fall below r_min=%g m and are clamped onto it; "
                    "such points nearly duplicate their far-field neighbour", clamped,
                    n_angles * gcfg.n_rings, gcfg.r_min)
    return np.array(theta), np.array(kappa)


def generate_delay_grid(Q2: int, tau_max: float) -> np.ndarray:
    if Q2 < 1:
        raise ValueError("Q2 must be at least 1")
    if Q2 == 1:
        return np.zeros(1)
    return np.arange(Q2) * tau_max / (Q2 - 1)


def initial_grid(gcfg: GridConfig, cfg: SystemConfig) -> PolarDelayGrid:
    theta, kappa = generate_polar_grid(gcfg, cfg)
    taus = generate_delay_grid(gcfg.Q2, cfg.tau_max)
    return PolarDelayGrid(
        theta=np.repeat(theta, gcfg.Q2),
        kappa=np.repeat(kappa, gcfg.Q2),
        tau=np.tile(taus, gcfg.Q1),
        tau_max=cfg.tau_max,
        kappa_scale=gcfg.r_min,
        kappa_max=1.0 / gcfg.r_min,
    )


def steering_matrix(grid: PolarDelayGrid, cfg: SystemConfig) -> np.ndarray:
    """Steering vectors of all grid points, shape (M, Q)."""
    return np.exp(1j * steering_phase(grid.theta, grid.kappa, cfg)) / np.sqrt(cfg.M)


def delay_matrix(grid: PolarDelayGrid, cfg: SystemConfig) -> np.ndarray:
    """Delay responses of all grid points, shape (N, Q)."""
    return delay_response(grid.tau, cfg)


def build_basis(grid: PolarDelayGrid, cfg: SystemConfig) -> np.ndarray:
    """Basis ``B`` of shape (MN, Q) whose column q is ``a_q kron d_q``."""
    A = steering_matrix(grid, cfg)
    D = delay_matrix(grid, cfg)
    return (A[:, None, :] * D[None, :, :]).reshape(cfg.M * cfg.N, grid.Q)


def build_transform(B: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Transform ``F = B * (U kron 1_N)``: every antenna block of B scaled by its VR entry."""
    U = np.asarray(U, dtype=float)
    if np.any(U < 0):
        raise ValueError("VR matrix entries must be non-negative")
    M, Q = U.shape
    if B.shape[1] != Q or B.shape[0] % M:
        raise ValueError(f"basis shape {B.shape} incompatible with VR shape {U.shape}")
    N = B.shape[0] // M
    return (B.reshape(M, N, Q) * U[:, None, :]).reshape(M * N, Q)


def grid_distance(path: PathParams, grid: PolarDelayGrid) -> np.ndarray:
    """Normalized distance over (theta, kappa * kappa_scale, tau / tau_max) to every grid point."""
    dt = grid.theta - path.theta
    dk = (grid.kappa - 1.0 / path.r) * grid.kappa_scale
    dtau = (grid.tau - path.tau) / grid.tau_max
    return np.sqrt(dt**2 + dk**2 + dtau**2)


def nearest_grid_point(path: PathParams, grid: PolarDelayGrid) -> int:
    if grid.Q == 0:
        raise ValueError("empty grid")
    # np.argmin returns the first minimum, i.e. the lowest index on ties
    return int(np.argmin(grid_distance(path, grid)))
