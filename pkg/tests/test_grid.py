import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xltrack.channel import PathParams, steering_vector, delay_response
from xltrack.grid import (
    GridConfig, PolarDelayGrid, build_basis, build_transform, generate_delay_grid,
    generate_polar_grid, grid_distance, initial_grid, nearest_grid_point, ring_distances,
)

DESK = GridConfig(angle_range=(-0.5, 0.5))


def test_sizes_and_ordering(desk_cfg):
    grid = initial_grid(DESK, desk_cfg)
    assert grid.Q == 256
    # delay runs fastest
    assert np.all(grid.theta[:8] == grid.theta[0])
    assert np.allclose(grid.tau[:8], np.arange(8) * desk_cfg.tau_max / 7)
    assert grid.kappa_max == pytest.approx(0.5)


def test_angles_are_cell_midpoints(desk_cfg):
    theta, kappa = generate_polar_grid(GridConfig(Q1=8, n_rings=1), desk_cfg)
    assert np.allclose(np.unique(theta), [-0.75, -0.25, 0.25, 0.75])
    far = 1 / (10 * desk_cfg.rayleigh_distance)
    assert np.allclose(kappa[::2], far)


def test_desk_sector_has_no_clamped_rings(desk_cfg, caplog):
    with caplog.at_level(logging.WARNING, logger="xltrack.grid"):
        _, kappa = generate_polar_grid(DESK, desk_cfg)
    assert not caplog.records
    assert np.all(kappa[1::2] < 0.5)


def test_clamped_rings_warn_once(caplog):
    from xltrack.channel import SystemConfig
    cfg = SystemConfig(M=32, N_RF=8, N=16, P=4)
    with caplog.at_level(logging.WARNING, logger="xltrack.grid"):
        _, kappa = generate_polar_grid(GridConfig(Q1=16), cfg)
    assert len(caplog.records) == 1
    assert np.allclose(kappa[1::2], 0.5)


def test_ring_distances(desk_cfg):
    r = ring_distances(0.0, 3, desk_cfg)
    assert np.allclose(r[0] / r, [1, 2, 3])
    assert ring_distances(1.0, 2, desk_cfg).size == 0


@pytest.mark.parametrize("kwargs", [{"Q1": 31}, {"r_min": 0.0}])
def test_invalid_polar_config(desk_cfg, kwargs):
    with pytest.raises(ValueError):
        generate_polar_grid(GridConfig(**kwargs), desk_cfg)


def test_delay_grid():
    assert np.array_equal(generate_delay_grid(1, 1.0), [0.0])
    assert np.allclose(generate_delay_grid(3, 1.0), [0, 0.5, 1])
    with pytest.raises(ValueError):
        generate_delay_grid(0, 1.0)


def test_basis_columns_are_kronecker(desk_cfg):
    grid = initial_grid(GridConfig(Q1=4, Q2=2, angle_range=(-0.5, 0.5)), desk_cfg)
    B = build_basis(grid, desk_cfg)
    assert B.shape == (64 * 32, 8)
    for q in (0, 5):
        a = steering_vector(grid.theta[q], grid.r[q], desk_cfg)
        d = delay_response(grid.tau[q], desk_cfg)
        assert np.allclose(B[:, q], np.kron(a, d))


@given(st.integers(0, 2**31))
def test_transform_scales_antenna_blocks(seed):
    rng = np.random.default_rng(seed)
    M, N, Q = 4, 3, 5
    B = rng.normal(size=(M * N, Q)) + 1j * rng.normal(size=(M * N, Q))
    U = rng.uniform(0, 2, size=(M, Q))
    F = build_transform(B, U)
    assert np.allclose(F, B * np.kron(U, np.ones((N, 1))))
    assert np.allclose(build_transform(B, np.ones((M, Q))), B)


def test_transform_validates():
    B = np.ones((6, 2))
    with pytest.raises(ValueError):
        build_transform(B, -np.ones((3, 2)))
    with pytest.raises(ValueError):
        build_transform(B, np.ones((4, 2)))


def test_grid_validates_shapes():
    with pytest.raises(ValueError):
        PolarDelayGrid(np.zeros(2), np.zeros(3), np.zeros(2), 1.0)


def test_nearest_point_and_ties(desk_cfg):
    grid = initial_grid(DESK, desk_cfg)
    q = 37
    path = PathParams(1.0, float(grid.theta[q]), float(grid.r[q]), float(grid.tau[q]))
    assert nearest_grid_point(path, grid) == q
    assert grid_distance(path, grid)[q] == 0
    twin = PolarDelayGrid(np.zeros(2), np.ones(2), np.zeros(2), 1.0)
    assert nearest_grid_point(PathParams(1.0, 0.0, 1.0, 0.0), twin) == 0
