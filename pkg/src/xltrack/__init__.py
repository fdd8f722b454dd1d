"""Near-field XL-MIMO channel and visibility-region tracking."""

from .channel import SystemConfig, PathParams, ChannelFrame, synthesize_channel
from .grid import GridConfig, PolarDelayGrid, initial_grid
from .priors import GammaHyper, SupportMarkovParams, VRMarkovParams, GaussMarkovParams, TemporalPrior
from .scenario import ScenarioConfig, PriorParams, simulate_scenes, render
from .tracker import TrackerConfig, FrameResult, track_frame, track_sequence, temporal_update
from .metrics import channel_nmse
from .experiments import ExperimentConfig, load_config, run_sweep

__all__ = [
    "SystemConfig", "PathParams", "ChannelFrame", "synthesize_channel",
    "GridConfig", "PolarDelayGrid", "initial_grid",
    "GammaHyper", "SupportMarkovParams", "VRMarkovParams", "GaussMarkovParams", "TemporalPrior",
    "ScenarioConfig", "PriorParams", "simulate_scenes", "render",
    "TrackerConfig", "FrameResult", "track_frame", "track_sequence", "temporal_update",
    "channel_nmse", "ExperimentConfig", "load_config", "run_sweep",
]

__version__ = "0.1.0"
