import csv

import pytest

from xltrack import cli
from xltrack.scenario import read_scenes

TINY_INI = """[system]
M = 16
N_RF = 4
N = 8
[grid]
Q1 = 8
Q2 = 2
n_rings = 0
angle_range = -0.5, 0.5
[scenario]
angle_range = -0.5, 0.5
[tracker]
I = 2
I1 = 10
I2 = 5
[sweep]
T = 2
seeds = 1
snrs = 5
path_counts = 2
speeds = 3
"""


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI)
    return path


def test_simulate(ini, tmp_path, capsys):
    out = tmp_path / "scenes"
    assert cli.main(["simulate", "--config", str(ini), "--out", str(out), "--paths", "2"]) == 0
    scenes = read_scenes(out / "scenes_s0_L2.jsonl", 16)
    assert len(scenes) == 2 and scenes[0].L == 2


def test_track(ini, tmp_path, capsys):
    out = tmp_path / "track"
    assert cli.main(["track", "--config", str(ini), "--out", str(out), "--mode", "iid", "--vbi", "exact"]) == 0
    with open(out / "track.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and {r["mode"] for r in rows} == {"iid"}
    assert "median NMSE" in capsys.readouterr().out


def test_sweep(ini, tmp_path, capsys):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", str(ini), "--out", str(out), "--snr", "0,5", "--seed", "4"]) == 0
    assert (out / "summary.csv").exists()
    assert "seed = 4" in (out / "config.ini").read_text()
    assert "snrs = 0.0, 5.0" in (out / "config.ini").read_text()


def test_env_output_dir(ini, tmp_path, monkeypatch):
    monkeypatch.setenv("XLTRACK_OUT", str(tmp_path / "env"))
    assert cli.main(["simulate", "--config", str(ini), "--paths", "2"]) == 0
    assert (tmp_path / "env" / "scenes_s0_L2.jsonl").exists()


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nM = 30\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--mode", "bayes"])
    with pytest.raises(SystemExit):
        cli.main([])
