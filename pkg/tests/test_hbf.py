from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xltrack import checks, hbf
from xltrack.channel import ChannelFrame, SystemConfig


@pytest.mark.parametrize("factor", [1, 2, 4])
def test_code_is_orthogonal(desk_cfg, factor):
    cfg = replace(desk_cfg, P=factor * desk_cfg.M_sub)
    D = hbf.encode_phase_shifters(cfg).D
    assert np.allclose(np.abs(D), 1.0)
    assert np.allclose(D.conj().T @ D, cfg.P * np.eye(cfg.M_sub), atol=1e-12)


@pytest.mark.parametrize("factor", [1, 2, 4])
def test_noiseless_round_trip(desk_cfg, rng, factor):
    cfg = replace(desk_cfg, P=factor * desk_cfg.M_sub)
    assert checks.hbf_roundtrip_error(cfg, rng) <= 1e-12


@given(st.integers(0, 2**31), st.sampled_from([(8, 2), (16, 4), (16, 8), (12, 3)]))
def test_round_trip_any_split(seed, dims):
    M, N_RF = dims
    cfg = SystemConfig(M=M, N_RF=N_RF, N=4, P=M // N_RF + 1)
    assert checks.hbf_roundtrip_error(cfg, np.random.default_rng(seed), trials=1) <= 1e-12


def test_decoded_noise_variance(desk_cfg, rng):
    assert checks.decoded_noise_ratio(desk_cfg, rng, draws=20_000) == pytest.approx(1.0, abs=0.05)
    obs = hbf.mix(ChannelFrame(np.zeros((32, 64))), hbf.encode_phase_shifters(desk_cfg),
                  hbf.unit_pilots(desk_cfg), None, desk_cfg, noise_var=2.0)
    dec = hbf.decode(obs, hbf.encode_phase_shifters(desk_cfg), desk_cfg)
    assert dec.noise_var == pytest.approx(2.0 * 4 / 4)
    assert dec.precision == pytest.approx(0.5)


def test_short_pilot_rejected(desk_cfg):
    cfg = replace(desk_cfg, P=desk_cfg.M_sub)
    object.__setattr__(cfg, "P", 2)
    with pytest.raises(ValueError):
        hbf.encode_phase_shifters(cfg)


def test_shape_checks(small_cfg, rng):
    code = hbf.encode_phase_shifters(small_cfg)
    pilots = hbf.unit_pilots(small_cfg, rng)
    assert np.allclose(np.abs(pilots), 1.0)
    with pytest.raises(ValueError):
        hbf.mix(ChannelFrame(np.zeros((3, 3))), code, pilots, None, small_cfg)
    with pytest.raises(ValueError):
        hbf.mix(ChannelFrame(np.zeros((8, 16))), code, pilots[:, :2], None, small_cfg)
    with pytest.raises(ValueError):
        hbf.mix(ChannelFrame(np.zeros((8, 16))), code, pilots, np.zeros((1, 1, 1)), small_cfg)


def test_decoded_matrix_view(small_cfg, rng):
    frame = checks.random_channel(small_cfg, rng)
    code = hbf.encode_phase_shifters(small_cfg)
    dec = hbf.decode(hbf.mix(frame, code, hbf.unit_pilots(small_cfg), None, small_cfg), code, small_cfg)
    assert np.allclose(dec.Y, frame.H)
    assert dec.precision == np.inf
