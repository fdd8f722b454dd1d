"""Command-line entry point: ``xltrack {simulate,track,sweep,verify}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import checks, experiments
from .channel import SystemConfig
from .scenario import write_scenes
from .tracker import IID, MARKOV
from .vbi import EXACT, INVERSE_FREE

VBI_FLAGS = {"exact": EXACT, "if": INVERSE_FREE}


def _snr_list(text: str) -> tuple:
    return tuple(float(s) for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file layered over the desk defaults")
    common.add_argument("--seed", type=int, help="base seed (non-negative)")
    common.add_argument("--out", help="output directory (env XLTRACK_OUT)")
    common.add_argument("--mode", choices=(MARKOV, IID), help="restrict to one prior mode")
    common.add_argument("--vbi", choices=tuple(VBI_FLAGS), help="channel estimator variant")
    common.add_argument("--snr", type=_snr_list, help="comma-separated SNR list in dB")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="xltrack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="write ground-truth scenes as JSON lines")
    s.add_argument("--paths", type=int, help="initial path count")
    t = sub.add_parser("track", parents=[common], help="track one scenario and write per-frame metrics")
    t.add_argument("--paths", type=int, help="initial path count")
    sub.add_parser("sweep", parents=[common], help="run all sweeps and write the CSV set")
    sub.add_parser("verify", parents=[common], help="run the numerical oracles")
    return p


def resolve_config(args) -> experiments.ExperimentConfig:
    cfg = experiments.load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.mode is not None:
        changes["modes"] = (args.mode,)
    if args.snr:
        changes["snrs"] = args.snr
    if args.vbi is not None:
        changes["tracker"] = replace(cfg.tracker, vbi_mode=VBI_FLAGS[args.vbi])
    return replace(cfg, **changes)


def cmd_simulate(cfg, args) -> int:
    out = experiments.check_writable(cfg.out)
    L = args.paths if args.paths is not None else cfg.scenario.L1
    for s in range(cfg.seeds):
        job = experiments.Job(cfg.modes[0], s, cfg.snrs[0], L, cfg.scenario.speed_kmh)
        scenes, _ = experiments.make_scenario(cfg, job)
        write_scenes(out / f"scenes_s{s}_L{L}.jsonl", scenes)
    print(f"wrote {cfg.seeds} scene file(s) to {out}")
    return 0


def cmd_track(cfg, args) -> int:
    out = experiments.check_writable(cfg.out)
    L = args.paths if args.paths is not None else cfg.scenario.L1
    rows = []
    for mode in cfg.modes:
        job = experiments.Job(mode, 0, cfg.snrs[0], L, cfg.scenario.speed_kmh)
        run = experiments.run_job(cfg, job)
        frames = experiments.frame_rows(run)
        rows += frames
        nm = [r["nmse_db"] for r in frames]
        print(f"{mode:6s} {job.scenario}: median NMSE {np.median(nm):.2f} dB, "
              f"iterations {[r['iterations'] for r in frames]}")
    experiments.write_csv(out / "track.csv", experiments.FRAME_COLUMNS, rows)
    return 0


def cmd_sweep(cfg, args) -> int:
    files = experiments.run_sweep(cfg)
    for name, path in files.items():
        print(f"{name:15s} {path}")
    return 0


def cmd_verify(cfg, args) -> int:
    rng = np.random.default_rng(cfg.seed)
    system = SystemConfig()
    results = []

    worst = max(checks.hbf_roundtrip_error(replace(system, P=k * system.M_sub), rng) for k in (1, 2, 4))
    results.append(("hbf round trip", worst, worst <= 1e-12))
    ratio = checks.decoded_noise_ratio(system, rng)
    results.append(("decoded noise scaling", ratio, abs(ratio - 1) <= 0.02))
    grads = checks.gradient_errors(system, rng, instances=20)
    results.append(("block gradients", max(grads.values()), max(grads.values()) <= 1e-5))
    gap_b = max(checks.module_b_error(M, rng) for M in (4, 8, 12))
    results.append(("chain denoiser vs enumeration", gap_b, gap_b <= 1e-10))
    gap_v = max(checks.vbi_mode_gap(cfg.seed + s) for s in range(5))
    results.append(("inverse-free vs exact VBI", gap_v, gap_v <= 1e-3))
    rec = [checks.exact_recovery(cfg.seed + s) for s in range(3)]
    h_db, u_db = max(r[0] for r in rec), max(r[1] for r in rec)
    results.append(("noiseless channel NMSE dB", h_db, h_db <= -120))
    results.append(("noiseless VR NMSE dB", u_db, u_db <= -60))

    for name, value, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:32s} {value:.3e}")
    return 0 if all(ok for _, _, ok in results) else 1


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (OSError, ValueError) as exc:
        print(f"xltrack: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
