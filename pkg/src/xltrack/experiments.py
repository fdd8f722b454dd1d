"""Monte-Carlo sweeps at desk scale with deterministic CSV output.

A run is identified by (mode, seed index, SNR, path count, speed). Scenes
depend only on the seed index and path count, and the receiver noise adds
the SNR, so sweeps that share a point reuse the same realization. Every CSV
except ``timing.csv`` is byte-identical across re-runs of the same config.
"""

from __future__ import annotations

import configparser
import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import SystemConfig
from .grid import GridConfig
from .metrics import SENTINEL_DB, channel_nmse, to_db, vr_error
from .scenario import PriorParams, ScenarioConfig, render, simulate_scenes
from .tracker import IID, MARKOV, TrackerConfig, track_sequence

log = logging.getLogger(__name__)

ENV_OUT = "XLTRACK_OUT"
ENV_THREADS = "XLTRACK_THREADS"
DESK_SECTOR = (-0.5, 0.5)

FRAME_COLUMNS = ["scenario", "mode", "seed", "snr_db", "n_paths", "speed_kmh", "t",
                 "nmse_db", "vr_nmse_db", "iterations"]
SCENARIO_COLUMNS = ["scenario", "mode", "seed", "snr_db", "n_paths", "speed_kmh",
                    "nmse_db", "vr_nmse_db", "frames", "vr_skipped"]
SUMMARY_COLUMNS = ["sweep", "mode", "snr_db", "n_paths", "speed_kmh", "metric",
                   "median", "q25", "q75", "count"]
TIMING_COLUMNS = ["scenario", "mode", "t", "wall_ms"]


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    grid: GridConfig = field(default_factory=lambda: GridConfig(angle_range=DESK_SECTOR))
    scenario: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(L1=3, angle_range=DESK_SECTOR))
    priors: PriorParams = field(default_factory=PriorParams)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    T: int = 10
    snrs: tuple = (-5.0, 0.0, 5.0, 10.0)
    path_counts: tuple = (2, 6, 10)
    speeds: tuple = (3.0, 30.0)
    path_snr: float = 0.0
    speed_snr: float = -5.0
    seeds: int = 20
    seed: int = 0
    modes: tuple = (MARKOV, IID)
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not (self.snrs and self.path_counts and self.speeds and self.modes):
            raise ValueError("sweep lists must be nonempty")
        if self.seeds < 1 or self.T < 1:
            raise ValueError("seeds and T must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for m in self.modes:
            if m not in (MARKOV, IID):
                raise ValueError(f"unknown mode {m!r}")


# ---------------------------------------------------------------- config file

_SECTIONS = {
    "system": ("system", None),
    "grid": ("grid", None),
    "scenario": ("scenario", None),
    "support": ("priors", "support"),
    "vr": ("priors", "vr"),
    "values": ("priors", "values"),
    "tracker": ("tracker", None),
    "hyper": ("tracker", "hyper"),
}


def _coerce(default, text: str):
    text = text.strip()
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [s.strip() for s in text.split(",") if s.strip()]
        kind = type(default[0]) if default else str
        return tuple(kind(s) if kind is not str else s for s in items)
    return text


def _update(obj, items: dict, section: str):
    known = {f.name for f in fields(obj)}
    changes = {}
    for key, text in items.items():
        if key not in known:
            raise ValueError(f"unknown key {key!r} in [{section}]")
        changes[key] = _coerce(getattr(obj, key), text)
    return replace(obj, **changes)


def load_config(path: str | os.PathLike | None = None, env: dict | None = None) -> ExperimentConfig:
    """Read an INI file on top of the defaults, then apply environment overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            items = dict(parser.items(section))
            if section == "sweep":
                cfg = _update(cfg, items, section)
                continue
            if section not in _SECTIONS:
                raise ValueError(f"unknown config section [{section}]")
            top, sub = _SECTIONS[section]
            parent = getattr(cfg, top)
            if sub is None:
                cfg = replace(cfg, **{top: _update(parent, items, section)})
            else:
                child = _update(getattr(parent, sub), items, section)
                cfg = replace(cfg, **{top: replace(parent, **{sub: child})})
    env = os.environ if env is None else env
    if env.get(ENV_OUT):
        cfg = replace(cfg, out=env[ENV_OUT])
    if env.get(ENV_THREADS):
        cfg = replace(cfg, workers=max(1, int(env[ENV_THREADS])))
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that :func:`load_config` reads back to ``cfg`` (output dir and workers excluded)."""
    parser = configparser.ConfigParser()
    parser.optionxform = str

    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return str(v)

    def put(name, obj):
        parser[name] = {f.name: fmt(getattr(obj, f.name)) for f in fields(obj)
                        if not hasattr(getattr(obj, f.name), "__dataclass_fields__")}

    put("system", cfg.system)
    put("grid", cfg.grid)
    put("scenario", cfg.scenario)
    for name in ("support", "vr", "values"):
        put(name, getattr(cfg.priors, name))
    put("tracker", cfg.tracker)
    put("hyper", cfg.tracker.hyper)
    sweep = {f.name: fmt(getattr(cfg, f.name)) for f in fields(cfg)
             if f.name not in _SECTIONS and f.name not in ("out", "workers", "priors")}
    parser["sweep"] = sweep
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in parser[section].items()]
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------- single runs

@dataclass(frozen=True)
class Job:
    mode: str
    seed: int
    snr_db: float
    n_paths: int
    speed_kmh: float

    @property
    def scenario(self) -> str:
        return f"s{self.seed}-L{self.n_paths}-v{self.speed_kmh:g}-snr{self.snr_db:g}"


def _snr_key(snr_db: float) -> int:
    if np.isinf(snr_db):
        return 0
    return int(round((snr_db + 1000.0) * 1000.0))


def scene_rng(cfg: ExperimentConfig, seed: int, n_paths: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, seed, n_paths])


def noise_rng(cfg: ExperimentConfig, seed: int, n_paths: int, snr_db: float) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, seed, n_paths, 1, _snr_key(snr_db)])


def make_scenario(cfg: ExperimentConfig, job: Job):
    """Ground-truth scenes and rendered frames of one job."""
    scfg = replace(cfg.scenario, speed_kmh=job.speed_kmh)
    scenes = simulate_scenes(cfg.T, cfg.system, scfg, cfg.priors, scene_rng(cfg, job.seed, job.n_paths),
                             L1=job.n_paths)
    rng = noise_rng(cfg, job.seed, job.n_paths, job.snr_db)
    frames, last = [], None
    for s in scenes:
        if np.any(s.u) or np.isinf(job.snr_db):
            frames.append(render(s, cfg.system, job.snr_db, rng))
            last = frames[-1].noise_var
        else:
            # nothing visible: the SNR is undefined, so keep the previous noise level
            var = last if last is not None else _nominal_noise_var(s, cfg.system, job.snr_db)
            frames.append(render(s, cfg.system, None, rng, noise_var=var))
    return scenes, frames


def _nominal_noise_var(state, system, snr_db: float) -> float:
    """Per-antenna noise variance that would give ``snr_db`` with every path fully visible."""
    energy = system.N * float(np.sum(np.abs(state.gain) ** 2))
    if energy == 0:
        raise ValueError("first frame has no paths; the noise level is undefined")
    decoded = system.M * system.N * system.M_sub / system.P
    return energy / (10 ** (snr_db / 10) * decoded)


def run_job(cfg: ExperimentConfig, job: Job) -> dict:
    """Track one scenario and score every frame against the truth."""
    scenes, frames = make_scenario(cfg, job)
    tcfg = replace(cfg.tracker, mode=job.mode)
    clock = [time.perf_counter()]
    wall = []

    def tick(t, res):
        now = time.perf_counter()
        wall.append(1e3 * (now - clock[0]))
        clock[0] = now

    results = track_sequence([f.obs.y for f in frames], cfg.system, cfg.grid, cfg.priors, tcfg, callback=tick)
    rows, traces = [], []
    for t, (res, scene, frame) in enumerate(zip(results, scenes, frames), start=1):
        h = frame.frame.h
        err, ref = vr_error(res.U, res.grid, scene.paths, scene.u)
        nm = channel_nmse(res.h, h) if np.any(h) else float("nan")
        rows.append({
            "t": t,
            "nmse": nm,
            "vr_err": err,
            "vr_ref": ref,
            "iterations": res.iterations,
        })
        trace = [channel_nmse(hh, h) if np.any(h) else float("nan") for hh in res.h_trace]
        traces.append(trace + [trace[-1]] * (tcfg.I - len(trace)))
    return {"job": job, "rows": rows, "traces": traces, "wall": wall}


# ---------------------------------------------------------------- sweeps

def sweep_jobs(cfg: ExperimentConfig) -> dict[str, list[Job]]:
    L0, v0 = cfg.scenario.L1, cfg.scenario.speed_kmh
    out = {"snr": [], "paths": [], "speed": []}
    for mode in cfg.modes:
        for s in range(cfg.seeds):
            out["snr"] += [Job(mode, s, float(snr), L0, v0) for snr in cfg.snrs]
            out["paths"] += [Job(mode, s, float(cfg.path_snr), int(L), v0) for L in cfg.path_counts]
            out["speed"] += [Job(mode, s, float(cfg.speed_snr), L0, float(v)) for v in cfg.speeds]
    return out


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if np.isnan(v):
        return "nan"
    return f"{v:.6f}"


def write_csv(path: Path, columns: list[str], rows: list[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def frame_rows(run: dict) -> list[dict]:
    job = run["job"]
    out = []
    for r in run["rows"]:
        vr = to_db(r["vr_err"] / r["vr_ref"]) if r["vr_ref"] > 0 else float("nan")
        out.append({"scenario": job.scenario, "mode": job.mode, "seed": job.seed, "snr_db": job.snr_db,
                    "n_paths": job.n_paths, "speed_kmh": job.speed_kmh, "t": r["t"],
                    "nmse_db": r["nmse"], "vr_nmse_db": vr, "iterations": r["iterations"]})
    return out


def scenario_metrics(run: dict) -> dict:
    """Frame-averaged (in linear scale) channel and VR NMSE of one scenario, in dB."""
    job = run["job"]
    nm = [10 ** (r["nmse"] / 10) for r in run["rows"] if np.isfinite(r["nmse"]) and r["nmse"] > SENTINEL_DB]
    nm += [0.0] * sum(1 for r in run["rows"] if r["nmse"] == SENTINEL_DB)
    vr = [r["vr_err"] / r["vr_ref"] for r in run["rows"] if r["vr_ref"] > 0]
    return {"scenario": job.scenario, "mode": job.mode, "seed": job.seed, "snr_db": job.snr_db,
            "n_paths": job.n_paths, "speed_kmh": job.speed_kmh,
            "nmse_db": to_db(float(np.mean(nm))) if nm else float("nan"),
            "vr_nmse_db": to_db(float(np.mean(vr))) if vr else float("nan"),
            "frames": len(run["rows"]), "vr_skipped": len(run["rows"]) - len(vr)}


def _stats(values) -> tuple[float, float, float, int]:
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan"), float("nan"), 0
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return float(med), float(q25), float(q75), int(v.size)


def summarize(sweeps: dict[str, list[Job]], runs: dict[Job, dict]) -> list[dict]:
    """Medians and interquartile ranges across seeds for every sweep point.

    NMSE metrics use the per-scenario frame average; iteration counts pool
    the frames of all seeds, split into the first frame and the rest.
    """
    rows = []
    for sweep, jobs in sweeps.items():
        points: dict = {}
        for job in jobs:
            points.setdefault((job.mode, job.snr_db, job.n_paths, job.speed_kmh), []).append(runs[job])
        for (mode, snr, L, v), group in sorted(points.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3])):
            sm = [scenario_metrics(r) for r in group]
            metrics = {
                "nmse_db": [s["nmse_db"] for s in sm],
                "vr_nmse_db": [s["vr_nmse_db"] for s in sm],
                "iterations_first": [r["rows"][0]["iterations"] for r in group],
                "iterations_rest": [x["iterations"] for r in group for x in r["rows"][1:]],
            }
            for name, vals in metrics.items():
                med, q25, q75, n = _stats(vals)
                rows.append({"sweep": sweep, "mode": mode, "snr_db": snr, "n_paths": L, "speed_kmh": v,
                             "metric": name, "median": med, "q25": q25, "q75": q75, "count": n})
    return rows


def check_writable(out: str | os.PathLike) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write_probe"
    probe.write_text("")
    probe.unlink()
    return path


def _run_job_args(args):
    return run_job(*args)


def run_jobs(cfg: ExperimentConfig, jobs: list[Job]) -> dict[Job, dict]:
    unique = list(dict.fromkeys(jobs))
    log.info("running %d scenarios with %d worker(s)", len(unique), cfg.workers)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = list(pool.map(_run_job_args, [(cfg, j) for j in unique]))
    else:
        done = []
        for i, j in enumerate(unique, 1):
            done.append(run_job(cfg, j))
            log.debug("%d/%d %s %s", i, len(unique), j.mode, j.scenario)
    return dict(zip(unique, done))


def run_sweep(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> dict[str, Path]:
    """Run every sweep and write the CSV files; returns their paths by name."""
    path = check_writable(out if out is not None else cfg.out)
    sweeps = sweep_jobs(cfg)
    runs = run_jobs(cfg, [j for jobs in sweeps.values() for j in jobs])

    files = {}
    conv_cols = FRAME_COLUMNS[:7] + [f"nmse_it{i}" for i in range(1, cfg.tracker.I + 1)]
    conv = []
    for job in sweeps["snr"]:
        run = runs[job]
        for r, trace in zip(run["rows"], run["traces"]):
            row = {"scenario": job.scenario, "mode": job.mode, "seed": job.seed, "snr_db": job.snr_db,
                   "n_paths": job.n_paths, "speed_kmh": job.speed_kmh, "t": r["t"]}
            row.update({f"nmse_it{i}": v for i, v in enumerate(trace, start=1)})
            conv.append(row)
    files["convergence"] = path / "convergence.csv"
    write_csv(files["convergence"], conv_cols, conv)

    for name, sweep in (("nmse_vs_snr", "snr"), ("nmse_vs_paths", "paths"), ("nmse_vs_speed", "speed")):
        files[name] = path / f"{name}.csv"
        write_csv(files[name], FRAME_COLUMNS, [row for j in sweeps[sweep] for row in frame_rows(runs[j])])
    files["vr_nmse_vs_snr"] = path / "vr_nmse_vs_snr.csv"
    write_csv(files["vr_nmse_vs_snr"], SCENARIO_COLUMNS, [scenario_metrics(runs[j]) for j in sweeps["snr"]])
    files["summary"] = path / "summary.csv"
    write_csv(files["summary"], SUMMARY_COLUMNS, summarize(sweeps, runs))
    files["config"] = path / "config.ini"
    files["config"].write_text(dump_config(cfg))

    timing = []
    for job, run in runs.items():
        timing += [{"scenario": job.scenario, "mode": job.mode, "t": t, "wall_ms": w}
                   for t, w in enumerate(run["wall"], start=1)]
    files["timing"] = path / "timing.csv"
    write_csv(files["timing"], TIMING_COLUMNS, timing)
    return files


def read_summary(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
