"""Ground-truth scene generator: birth-death paths with drifting geometry and
continuous visibility regions, rendered through the hybrid-beamforming front end.

Every random draw in :func:`evolve_scene` happens in a fixed order and count
that does not depend on the user speed, so two runs with the same seed and
different speeds see identical births, deaths, gains and visibility regions;
only the geometry drift magnitude differs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import hbf, priors
from .channel import ChannelFrame, PathParams, SystemConfig, synthesize_channel
from .priors import GaussMarkovParams, SupportMarkovParams, VRMarkovParams


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulator policy.

    Drift constants convert the distance moved per frame (speed x interval)
    into standard deviations of the angle cosine (1/m), inverse distance
    (1/m^2) and delay (s/m) steps.
    """

    L1: int = 4
    L_max: int = 16
    birth_pool: int = 64
    rho_gain: float = 0.9
    speed_kmh: float = 3.0
    frame_interval: float = 0.05
    c_theta: float = 0.05
    c_kappa: float = 2.5e-3
    c_tau: float = 1.0 / 299_792_458.0
    r_min: float = 2.0
    r_far_factor: float = 10.0
    angle_range: tuple[float, float] = (-1.0, 1.0)


@dataclass
class PriorParams:
    support: SupportMarkovParams = field(default_factory=SupportMarkovParams)
    vr: VRMarkovParams = field(default_factory=VRMarkovParams)
    values: GaussMarkovParams = field(default_factory=GaussMarkovParams)


@dataclass
class SceneState:
    """Active paths of one frame; ``alpha``/``beta`` have shape (L, M)."""

    t: int
    gain: np.ndarray
    theta: np.ndarray
    r: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    speed_kmh: float = 3.0
    frame_interval: float = 0.05

    @property
    def L(self) -> int:
        return self.gain.size

    @property
    def u(self) -> np.ndarray:
        """Visibility regions, shape (L, M), non-negative."""
        return self.alpha * np.maximum(self.beta, 0.0)

    @property
    def paths(self) -> list[PathParams]:
        return [
            PathParams(complex(g), float(th), float(r), float(tau))
            for g, th, r, tau in zip(self.gain, self.theta, self.r, self.tau)
        ]

    def channel(self, cfg: SystemConfig) -> ChannelFrame:
        return synthesize_channel(self.paths, list(self.u), cfg)


@dataclass
class RenderedFrame:
    frame: ChannelFrame
    obs: hbf.DecodedObservation
    snr_db: float
    noise_var: float


def _draw_paths(n: int, cfg: SystemConfig, scfg: ScenarioConfig, pp: PriorParams, rng):
    lo, hi = scfg.angle_range
    r_far = scfg.r_far_factor * cfg.rayleigh_distance
    theta = rng.uniform(lo, hi, n)
    r = np.exp(rng.uniform(np.log(scfg.r_min), np.log(r_far), n))
    tau = rng.uniform(0.0, cfg.tau_max, n)
    gain = (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2)
    alpha = priors.sample_vr_frame(None, pp.vr, cfg.M, rng, n=n)
    beta = priors.sample_gauss_markov_initial(pp.values, (n, cfg.M), rng)
    return gain, theta, r, tau, alpha, beta


def init_scene(
    L1: int, cfg: SystemConfig, scfg: ScenarioConfig, pp: PriorParams, rng
) -> SceneState:
    if L1 < 0:
        raise ValueError("initial path count must be non-negative")
    gain, theta, r, tau, alpha, beta = _draw_paths(L1, cfg, scfg, pp, rng)
    return SceneState(
        t=1, gain=gain, theta=theta, r=r, tau=tau, alpha=alpha, beta=beta,
        speed_kmh=scfg.speed_kmh, frame_interval=scfg.frame_interval,
    )


def evolve_scene(
    state: SceneState, cfg: SystemConfig, scfg: ScenarioConfig, pp: PriorParams, rng
) -> SceneState:
    L = state.L
    survive = rng.random(L) >= pp.support.p10
    steps = rng.normal(size=(L, 3))
    innov = (rng.normal(size=L) + 1j * rng.normal(size=L)) / np.sqrt(2)
    alpha = priors.sample_vr_frame(state.alpha, pp.vr, cfg.M, rng, n=L)
    beta = priors.gauss_markov_step(state.beta, pp.values, rng)
    born = int(np.sum(rng.random(scfg.birth_pool) < pp.support.p01))

    moved = state.speed_kmh / 3.6 * state.frame_interval
    r_far = scfg.r_far_factor * cfg.rayleigh_distance
    theta = np.clip(state.theta + steps[:, 0] * moved * scfg.c_theta, -1.0, 1.0)
    kappa = np.clip(1.0 / state.r + steps[:, 1] * moved * scfg.c_kappa, 1.0 / r_far, 1.0 / scfg.r_min)
    tau = np.clip(state.tau + steps[:, 2] * moved * scfg.c_tau, 0.0, cfg.tau_max)
    gain = scfg.rho_gain * state.gain + np.sqrt(1 - scfg.rho_gain**2) * innov

    keep = survive
    parts = [gain[keep], theta[keep], 1.0 / kappa[keep], tau[keep], alpha[keep], beta[keep]]
    born = min(born, scfg.L_max - int(keep.sum()))
    if born > 0:
        new = _draw_paths(born, cfg, scfg, pp, rng)
        parts = [np.concatenate([old, fresh]) for old, fresh in zip(parts, new)]
    gain, theta, r, tau, alpha, beta = parts
    return SceneState(
        t=state.t + 1, gain=gain, theta=theta, r=r, tau=tau, alpha=alpha, beta=beta,
        speed_kmh=state.speed_kmh, frame_interval=state.frame_interval,
    )


def simulate_scenes(
    T: int, cfg: SystemConfig, scfg: ScenarioConfig, pp: PriorParams, rng, L1: int | None = None
) -> list[SceneState]:
    scenes = [init_scene(scfg.L1 if L1 is None else L1, cfg, scfg, pp, rng)]
    for _ in range(1, T):
        scenes.append(evolve_scene(scenes[-1], cfg, scfg, pp, rng))
    return scenes


def render(
    state: SceneState,
    cfg: SystemConfig,
    snr_db: float | None,
    rng,
    noise_var: float | None = None,
    pilots: np.ndarray | None = None,
) -> RenderedFrame:
    """Synthesize, mix and decode one frame.

    With ``snr_db`` given, the per-antenna noise variance is set so that the
    decoded-domain ratio ``||h||^2 / ||z_tilde||^2`` equals the target for the
    realized noise. ``snr_db=inf`` switches noise off. Alternatively an
    explicit pre-mixing ``noise_var`` can be passed with ``snr_db=None``.
    """
    frame = state.channel(cfg)
    code = hbf.encode_phase_shifters(cfg)
    if pilots is None:
        pilots = hbf.unit_pilots(cfg)
    shape = (cfg.P, cfg.N, cfg.M)
    unit = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)

    energy = float(np.sum(np.abs(frame.H) ** 2))
    if snr_db is not None:
        if np.isinf(snr_db) and snr_db > 0:
            sigma2 = 0.0
        else:
            if energy == 0:
                raise ValueError("cannot reach a finite SNR with a zero-energy channel")
            zero = ChannelFrame(np.zeros_like(frame.H))
            z_unit = hbf.decode(hbf.mix(zero, code, pilots, unit, cfg), code, cfg).y
            sigma2 = energy / (10 ** (snr_db / 10) * float(np.sum(np.abs(z_unit) ** 2)))
    elif noise_var is not None:
        sigma2 = float(noise_var)
    else:
        raise ValueError("either snr_db or noise_var is required")

    noise = np.sqrt(sigma2) * unit if sigma2 > 0 else None
    obs = hbf.decode(hbf.mix(frame, code, pilots, noise, cfg, noise_var=sigma2), code, cfg)
    z = obs.y - frame.h
    z_energy = float(np.sum(np.abs(z) ** 2))
    if z_energy == 0:
        realized = np.inf
    elif energy == 0:
        realized = -np.inf
    else:
        realized = 10 * np.log10(energy / z_energy)
    return RenderedFrame(frame=frame, obs=obs, snr_db=realized, noise_var=sigma2)


def scene_to_record(state: SceneState) -> dict:
    return {
        "t": state.t,
        "speed_kmh": state.speed_kmh,
        "frame_interval": state.frame_interval,
        "paths": [
            {
                "gain": [float(g.real), float(g.imag)],
                "theta": float(th),
                "r": float(r),
                "tau": float(tau),
                "alpha": [int(a) for a in al],
                "beta": [float(b) for b in be],
            }
            for g, th, r, tau, al, be in zip(
                state.gain, state.theta, state.r, state.tau, state.alpha, state.beta
            )
        ],
    }


def scene_from_record(rec: dict, M: int) -> SceneState:
    paths = rec["paths"]
    return SceneState(
        t=int(rec["t"]),
        gain=np.array([complex(*p["gain"]) for p in paths], dtype=complex),
        theta=np.array([p["theta"] for p in paths], dtype=float),
        r=np.array([p["r"] for p in paths], dtype=float),
        tau=np.array([p["tau"] for p in paths], dtype=float),
        alpha=np.array([p["alpha"] for p in paths], dtype=bool).reshape(-1, M),
        beta=np.array([p["beta"] for p in paths], dtype=float).reshape(-1, M),
        speed_kmh=float(rec.get("speed_kmh", 3.0)),
        frame_interval=float(rec.get("frame_interval", 0.05)),
    )


def write_scenes(path, scenes: Iterable[SceneState]):
    """One JSON record per line, one line per frame."""
    with open(path, "w") as fh:
        for s in scenes:
            fh.write(json.dumps(scene_to_record(s)) + "\n")


def read_scenes(path, M: int) -> list[SceneState]:
    with open(path) as fh:
        return [scene_from_record(json.loads(line), M) for line in fh if line.strip()]
