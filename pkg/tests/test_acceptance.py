"""Acceptance suite: oracles plus the desk-scale tracking study.

The study runs the default sweep once (about ten minutes on one core).
"""

from dataclasses import replace

import numpy as np
import pytest

from xltrack import checks
from xltrack import experiments as ex
from xltrack.channel import SystemConfig

DESK = SystemConfig()


def test_hbf_round_trip(criterion):
    rng = np.random.default_rng(0)
    worst = max(checks.hbf_roundtrip_error(replace(DESK, P=k * DESK.M_sub), rng) for k in (1, 2, 4))
    criterion("HBF round trip, P in {M_sub, 2M_sub, 4M_sub}", worst <= 1e-12, f"max rel err {worst:.2e} <= 1e-12")


def test_noise_scaling(criterion):
    ratio = checks.decoded_noise_ratio(DESK, np.random.default_rng(1), draws=100_000)
    criterion("decoded noise variance / (M_sub/P)", abs(ratio - 1) <= 0.02, f"ratio {ratio:.4f}, tol 2%")


def test_gradient_check(criterion):
    worst = checks.gradient_errors(DESK, np.random.default_rng(2), instances=100)
    detail = ", ".join(f"{b} {v:.1e}" for b, v in worst.items())
    criterion("block gradients vs central differences (100 instances)", max(worst.values()) <= 1e-5, detail)


def test_module_b_oracle(criterion):
    rng = np.random.default_rng(3)
    gaps = {M: checks.module_b_error(M, rng) for M in (4, 8, 12)}
    detail = ", ".join(f"M={M} {g:.1e}" for M, g in gaps.items())
    criterion("Module B vs 2^M enumeration", max(gaps.values()) <= 1e-10, detail)


def test_vbi_oracle(criterion):
    gaps = [checks.vbi_mode_gap(seed) for seed in range(20)]
    criterion("inverse-free vs exact VBI (20 seeds, 10 dB)", max(gaps) <= 1e-3,
              f"max NMSE gap {max(gaps):.2e} <= 1e-3")


def test_exact_recovery(criterion):
    rec = [checks.exact_recovery(seed) for seed in range(5)]
    h_db, u_db = max(r[0] for r in rec), max(r[1] for r in rec)
    criterion("noiseless on-grid recovery", h_db <= -120 and u_db <= -60,
              f"channel {h_db:.1f} dB <= -120, VR {u_db:.1f} dB <= -60")


# ---------------------------------------------------------------- desk-scale study

@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    cfg = ex.ExperimentConfig()
    files = ex.run_sweep(cfg, tmp_path_factory.mktemp("desk"))
    rows = ex.read_summary(files["summary"])
    timing = ex.read_summary(files["timing"])
    return cfg, rows, timing


def _median(rows, sweep, metric, **key):
    out = {}
    for r in rows:
        if r["sweep"] != sweep or r["metric"] != metric:
            continue
        if any(float(r[k]) != v for k, v in key.items() if k != "mode") or r["mode"] != key.get("mode", r["mode"]):
            continue
        out[(r["mode"], float(r["snr_db"]), int(r["n_paths"]), float(r["speed_kmh"]))] = float(r["median"])
    return out


def _series(med, mode, index):
    items = sorted((k[index], v) for k, v in med.items() if k[0] == mode)
    return [k for k, _ in items], [v for _, v in items]


def test_desk_nmse_decreases_with_snr(desk, criterion):
    _, rows, _ = desk
    med = _median(rows, "snr", "nmse_db", mode="markov")
    snrs, vals = _series(med, "markov", 1)
    ok = all(b < a for a, b in zip(vals, vals[1:]))
    criterion("(a) median NMSE strictly decreases with SNR", ok,
              ", ".join(f"{s:g} dB: {v:.2f}" for s, v in zip(snrs, vals)))


def test_desk_markov_beats_iid(desk, criterion):
    _, rows, _ = desk
    med = _median(rows, "snr", "nmse_db")
    snrs, mk = _series(med, "markov", 1)
    _, iid = _series(med, "iid", 1)
    ok = all(a < b for a, b in zip(mk, iid))
    criterion("(b) markov median NMSE below iid at every SNR", ok,
              ", ".join(f"{s:g} dB: {a:.2f} vs {b:.2f}" for s, a, b in zip(snrs, mk, iid)))


def test_desk_tracking_converges_faster(desk, criterion):
    _, rows, _ = desk
    first = _median(rows, "snr", "iterations_first")
    rest = _median(rows, "snr", "iterations_rest")
    ok = all(rest[k] <= first[k] for k in first)
    criterion("(c) median outer iterations t>=2 <= t=1, both modes", ok,
              ", ".join(f"{k[0]} {k[1]:g} dB: {first[k]:g}/{rest[k]:g}" for k in sorted(first)))


def test_desk_runtime(desk, criterion):
    cfg, _, timing = desk
    snr_ids = {j.scenario for j in ex.sweep_jobs(cfg)["snr"]}
    total = sum(float(r["wall_ms"]) for r in timing if r["scenario"] in snr_ids) / 1e3
    criterion("desk SNR study runtime", total < 600, f"{total:.0f} s < 600 s")


def test_path_count_degradation(desk, criterion):
    _, rows, _ = desk
    med = _median(rows, "paths", "nmse_db")
    ok, parts = True, []
    for mode in ("markov", "iid"):
        Ls, vals = _series(med, mode, 2)
        ok &= all(b >= a for a, b in zip(vals, vals[1:]))
        parts.append(f"{mode} " + " ".join(f"L={L}:{v:.2f}" for L, v in zip(Ls, vals)))
    criterion("median NMSE at 0 dB non-decreasing in L, both modes", ok, "; ".join(parts))


def test_speed_sensitivity(desk, criterion):
    _, rows, _ = desk
    med = _median(rows, "speed", "nmse_db")
    ok, parts = True, []
    for mode in ("markov", "iid"):
        speeds, vals = _series(med, mode, 3)
        ok &= vals[-1] >= vals[0]
        parts.append(f"{mode} " + " ".join(f"{v:g}km/h:{x:.2f}" for v, x in zip(speeds, vals)))
    criterion("median NMSE at -5 dB, 30 km/h >= 3 km/h, both modes", ok, "; ".join(parts))


def test_determinism(tmp_path, criterion):
    cfg = replace(ex.ExperimentConfig(), seeds=2, T=3, snrs=(0.0,), path_counts=(3,), speeds=(3.0,))
    a = ex.run_sweep(cfg, tmp_path / "a")
    b = ex.run_sweep(cfg, tmp_path / "b")
    differ = [n for n in a if n != "timing" and a[n].read_bytes() != b[n].read_bytes()]
    criterion("sweep re-run byte-identical", not differ,
              f"{len(a) - 1} CSV/INI files compared" + (f", differing: {differ}" if differ else ""))
