from dataclasses import replace

import numpy as np
import pytest

from xltrack.scenario import (
    PriorParams, ScenarioConfig, init_scene, read_scenes, render, simulate_scenes, write_scenes,
)

SCFG = ScenarioConfig(L1=3, angle_range=(-0.5, 0.5))


@pytest.fixture(scope="module")
def scenes(desk_cfg):
    return simulate_scenes(10, desk_cfg, SCFG, PriorParams(), np.random.default_rng(5))


def test_scene_shapes(scenes, desk_cfg):
    assert len(scenes) == 10
    assert [s.t for s in scenes] == list(range(1, 11))
    s = scenes[0]
    assert s.L == 3 and s.alpha.shape == (3, 64) and s.u.shape == (3, 64)
    assert np.all(np.abs(s.theta) <= 0.5)
    assert np.all((s.r >= 2.0) & (s.r <= 10 * desk_cfg.rayleigh_distance))


def test_negative_values_are_invisible(desk_cfg, rng):
    s = init_scene(2, desk_cfg, SCFG, PriorParams(), rng)
    s.beta[:] = -1.0
    assert not s.u.any()
    assert not s.channel(desk_cfg).H.any()


def test_path_count_bounds(desk_cfg):
    pp = PriorParams()
    pp.support = replace(pp.support, p01=0.5, p10=0.0)
    scfg = replace(SCFG, L_max=5)
    out = simulate_scenes(4, desk_cfg, scfg, pp, np.random.default_rng(0))
    assert max(s.L for s in out) == 5
    with pytest.raises(ValueError):
        init_scene(-1, desk_cfg, SCFG, pp, np.random.default_rng(0))


def test_speed_only_changes_drift(desk_cfg):
    pp = PriorParams()
    pp.support = replace(pp.support, p01=0.0, p10=0.0)
    slow = simulate_scenes(6, desk_cfg, SCFG, pp, np.random.default_rng(3))
    fast = simulate_scenes(6, desk_cfg, replace(SCFG, speed_kmh=30.0), pp, np.random.default_rng(3))
    for a, b in zip(slow, fast):
        assert np.array_equal(a.alpha, b.alpha)
        assert np.allclose(a.gain, b.gain)
    drift = lambda seq: np.abs(seq[-1].theta - seq[0].theta)
    assert np.allclose(drift(fast), 10 * drift(slow))


@pytest.mark.parametrize("snr", [-5.0, 0.0, 10.0])
def test_render_hits_target_snr(scenes, desk_cfg, snr):
    f = render(scenes[0], desk_cfg, snr, np.random.default_rng(1))
    assert f.snr_db == pytest.approx(snr, abs=1e-9)
    assert f.obs.noise_var == pytest.approx(f.noise_var)


def test_render_noiseless_and_explicit(scenes, desk_cfg):
    f = render(scenes[0], desk_cfg, np.inf, np.random.default_rng(1))
    assert f.noise_var == 0 and f.snr_db > 250
    assert np.allclose(f.obs.y, f.frame.h)
    g = render(scenes[0], desk_cfg, None, np.random.default_rng(1), noise_var=0.5)
    assert g.noise_var == 0.5
    with pytest.raises(ValueError):
        render(scenes[0], desk_cfg, None, np.random.default_rng(1))


def test_zero_channel_cannot_reach_snr(desk_cfg, rng):
    s = init_scene(0, desk_cfg, SCFG, PriorParams(), rng)
    with pytest.raises(ValueError):
        render(s, desk_cfg, 0.0, rng)


def test_jsonl_round_trip(scenes, desk_cfg, tmp_path):
    path = tmp_path / "scenes.jsonl"
    write_scenes(path, scenes)
    back = read_scenes(path, desk_cfg.M)
    assert len(back) == len(scenes)
    for a, b in zip(scenes, back):
        assert np.allclose(a.channel(desk_cfg).H, b.channel(desk_cfg).H)
        assert np.array_equal(a.alpha, b.alpha)
