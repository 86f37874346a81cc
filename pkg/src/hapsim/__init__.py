"""Air-ground network-MIMO resource management: FP beamforming with user
association for sum rate, and proportional-fair OFDMA scheduling."""

from . import channel, fp_core, metrics, numerics, pf, presets, qcqp, scenario, sumrate
from .channel import ChannelSet, draw_channel_set
from .metrics import MetricsReport, jain_index, served_fraction, summarize
from .pf import PfRun, PfSettings, run_pf
from .presets import PRESETS, baseline_zf
from .scenario import Scenario, ScenarioConfig, build_scenario, eligible_clusters
from .sumrate import SumRateRun, SumRateSettings
from .sumrate import run as run_sumrate

__all__ = [
    "ChannelSet",
    "MetricsReport",
    "PRESETS",
    "PfRun",
    "PfSettings",
    "Scenario",
    "ScenarioConfig",
    "SumRateRun",
    "SumRateSettings",
    "baseline_zf",
    "build_scenario",
    "channel",
    "draw_channel_set",
    "eligible_clusters",
    "fp_core",
    "jain_index",
    "metrics",
    "numerics",
    "pf",
    "presets",
    "qcqp",
    "run_pf",
    "run_sumrate",
    "scenario",
    "served_fraction",
    "summarize",
    "sumrate",
]
