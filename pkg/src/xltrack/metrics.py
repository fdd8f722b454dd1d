"""Error metrics in dB with a finite floor for exact recovery."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .grid import PolarDelayGrid, nearest_grid_point

SENTINEL_DB = -300.0


def to_db(ratio: float) -> float:
    if ratio <= 0:
        return SENTINEL_DB
    return max(10.0 * np.log10(ratio), SENTINEL_DB)


def channel_nmse(h_hat: np.ndarray, h: np.ndarray) -> float:
    """``||h_hat - h||^2 / ||h||^2`` in dB; NaN when the truth is zero."""
    h_hat = np.asarray(h_hat)
    h = np.asarray(h)
    if h_hat.shape != h.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h.shape}")
    ref = float(np.vdot(h, h).real)
    if ref == 0:
        return float("nan")
    err = h_hat - h
    return to_db(float(np.vdot(err, err).real) / ref)


def vr_error(U_hat: np.ndarray, grid: PolarDelayGrid, paths, u_true: np.ndarray) -> tuple[float, float]:
    """Squared VR error and reference energy of one frame.

    Each true path is compared with the estimated VR column of its nearest
    grid point. ``U_hat`` is (M, Q), ``u_true`` is (L, M).
    """
    err = ref = 0.0
    for path, u in zip(paths, u_true):
        q = nearest_grid_point(path, grid)
        err += float(np.sum((u - U_hat[:, q]) ** 2))
        ref += float(np.sum(u**2))
    return err, ref


def vr_nmse(U_hats: Sequence[np.ndarray], grids: Sequence[PolarDelayGrid], scenes) -> tuple[float, int]:
    """Frame-averaged VR NMSE in dB and the number of frames skipped for having no visible path."""
    ratios = []
    skipped = 0
    for U_hat, grid, scene in zip(U_hats, grids, scenes):
        err, ref = vr_error(U_hat, grid, scene.paths, scene.u)
        if ref == 0:
            skipped += 1
            continue
        ratios.append(err / ref)
    if not ratios:
        return float("nan"), skipped
    return to_db(float(np.mean(ratios))), skipped
