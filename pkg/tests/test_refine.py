import numpy as np
import pytest
from hypothesis import given, strategies as st

from xltrack import checks
from xltrack.channel import PathParams, synthesize_channel
from xltrack.grid import PolarDelayGrid, build_basis, build_transform
from xltrack.refine import (
    BLOCKS, armijo_refine, gradient_block, initial_steps, log_likelihood, log_likelihood_vec, resolution,
)
from xltrack.channel import vec


def _single_path(cfg, seed, offset=0.5):
    """Noiseless fully visible path and a one-point grid displaced by ``offset`` cells per block."""
    rng = np.random.default_rng(seed)
    th, kap, tau = rng.uniform(-0.4, 0.4), rng.uniform(0.12, 0.3), rng.uniform(0.3, 0.7) * cfg.tau_max
    g = complex(rng.normal(), rng.normal())
    Y = synthesize_channel([PathParams(g, th, 1 / kap, tau)], [np.ones(cfg.M)], cfg).H
    res = resolution(cfg)
    sign = rng.choice([-1, 1], 3)
    grid = PolarDelayGrid(np.array([th + sign[0] * offset * res["theta"]]),
                          np.array([kap + sign[1] * offset * res["kappa"]]),
                          np.array([tau + sign[2] * offset * res["tau"]]), cfg.tau_max, 2.0, 0.5)
    return grid, np.array([g]), np.ones((cfg.M, 1)), Y, (th, kap, tau)


def test_gradients_match_finite_differences(desk_cfg, rng):
    worst = checks.gradient_errors(desk_cfg, rng, instances=10)
    assert max(worst.values()) <= 1e-5


def test_two_likelihood_code_paths_agree(desk_cfg, rng):
    grid, x, U, gamma, Y = checks.random_refine_instance(desk_cfg, rng)
    assert log_likelihood(grid, x, U, gamma, Y, desk_cfg) == pytest.approx(
        log_likelihood_vec(grid, x, U, gamma, vec(Y), desk_cfg), rel=1e-12)


def test_likelihood_is_quadratic_in_residual(desk_cfg, rng):
    grid, x, U, gamma, _ = checks.random_refine_instance(desk_cfg, rng)
    model = (build_transform(build_basis(grid, desk_cfg), U) @ x).reshape((desk_cfg.N, desk_cfg.M), order="F")
    assert log_likelihood(grid, x, U, gamma, model, desk_cfg) == pytest.approx(0.0, abs=1e-20)
    R = rng.normal(size=model.shape)
    one = log_likelihood(grid, x, U, gamma, model + R, desk_cfg)
    assert log_likelihood(grid, x, U, gamma, model + 2 * R, desk_cfg) == pytest.approx(4 * one)


def test_zero_gain_gives_zero_gradient(desk_cfg, rng):
    grid, x, U, gamma, Y = checks.random_refine_instance(desk_cfg, rng)
    for block in BLOCKS:
        assert not gradient_block(grid, block, np.zeros_like(x), U, gamma, Y, desk_cfg).any()
    with pytest.raises(ValueError):
        gradient_block(grid, "phase", x, U, gamma, Y, desk_cfg)


def test_gradient_vanishes_at_truth(desk_cfg):
    grid, x, U, Y, truth = _single_path(desk_cfg, 0, offset=0.0)
    for block in BLOCKS:
        assert np.abs(gradient_block(grid, block, x, U, 1.0, Y, desk_cfg)).max() < 1e-6


def test_stationary_point_is_kept(desk_cfg):
    grid, x, U, Y, _ = _single_path(desk_cfg, 1, offset=0.0)
    out = armijo_refine(grid, x, U, 1.0, Y, desk_cfg)
    assert out.accepted == 0
    assert np.array_equal(out.grid.as_array(), grid.as_array())


@pytest.mark.parametrize("scaled", [False, True])
@pytest.mark.parametrize("seed", range(4))
def test_half_cell_offset_shrinks_tenfold(desk_cfg, seed, scaled):
    grid, x, U, Y, truth = _single_path(desk_cfg, seed)
    out = armijo_refine(grid, x, U, 1.0, Y, desk_cfg, max_steps=100, scaled=scaled)
    before = np.abs(grid.as_array()[0] - truth)
    after = np.abs(out.grid.as_array()[0] - truth)
    assert np.all(after <= before / 10)
    assert np.all(np.diff(out.trace) >= 0)


@given(st.integers(0, 2**31))
def test_trace_monotone_and_boxed(seed):
    from xltrack.channel import SystemConfig
    cfg = SystemConfig(M=16, N_RF=4, N=8, P=4)
    rng = np.random.default_rng(seed)
    grid, x, U, gamma, Y = checks.random_refine_instance(cfg, rng)
    grid.theta[0] = 0.999
    out = armijo_refine(grid, x, U, gamma, Y, cfg, max_steps=4)
    assert np.all(np.diff(out.trace) >= 0)
    g = out.grid
    assert np.all(np.abs(g.theta) <= 1) and np.all(g.kappa > 0) and np.all(g.kappa <= g.kappa_max)
    assert np.all((g.tau >= 0) & (g.tau <= g.tau_max))


def test_only_active_points_move(desk_cfg, rng):
    grid, x, U, gamma, Y = checks.random_refine_instance(desk_cfg, rng)
    out = armijo_refine(grid, x, U, gamma, Y, desk_cfg, active=np.array([1, 4]))
    frozen = [0, 2, 3, 5]
    assert np.array_equal(out.grid.as_array()[frozen], grid.as_array()[frozen])
    assert out.accepted > 0


def test_initial_steps_are_fractions_of_a_cell(desk_cfg):
    steps, cell = initial_steps(desk_cfg), resolution(desk_cfg)
    for block in BLOCKS:
        assert 0 < steps[block] < cell[block]
