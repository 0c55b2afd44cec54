"""Learned joint RIS phase design, resource-block allocation and beamforming for MISO-OFDMA."""
from .baselines import BASELINE_KINDS, exhaustive_oracle, run_baseline
from .beamforming import compute_rates, solve_beamforming, water_fill
from .channel import FrequencyChannel, draw_frequency_channel, effective_channel
from .estimator import JointAllocator
from .exceptions import (
    ConfigError,
    DimensionError,
    MissingCheckpointError,
    ModelAssumptionError,
    NoSignalError,
    NonFiniteLossError,
    ResultParseError,
    RISOFDMAError,
    SearchSpaceError,
    ValidationError,
)
from .pipeline import Decision
from .scenario import ScenarioConfig, desk_scale_config, load_config
from .training import EvalMetrics, TrainHistory

__version__ = "0.1.0"

__all__ = [
    "BASELINE_KINDS",
    "ConfigError",
    "Decision",
    "DimensionError",
    "EvalMetrics",
    "FrequencyChannel",
    "JointAllocator",
    "MissingCheckpointError",
    "ModelAssumptionError",
    "NoSignalError",
    "NonFiniteLossError",
    "RISOFDMAError",
    "ResultParseError",
    "ScenarioConfig",
    "SearchSpaceError",
    "TrainHistory",
    "ValidationError",
    "compute_rates",
    "desk_scale_config",
    "draw_frequency_channel",
    "effective_channel",
    "exhaustive_oracle",
    "load_config",
    "run_baseline",
    "solve_beamforming",
    "water_fill",
]
