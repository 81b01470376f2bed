from .config import PowerModel, SsdConfig, accelerator_power, load_config, load_profile
from .energy import energy, energy_breakdown
from .ftl import CompactMapping, ftl_layout, metadata_budget, regular_l2p_bytes
from .sim import MODES, BucketLoad, Event, StagePlan, Timeline, simulate, simulate_sequential

__all__ = [
    "MODES",
    "BucketLoad",
    "CompactMapping",
    "Event",
    "PowerModel",
    "SsdConfig",
    "StagePlan",
    "Timeline",
    "accelerator_power",
    "energy",
    "energy_breakdown",
    "ftl_layout",
    "load_config",
    "load_profile",
    "metadata_budget",
    "regular_l2p_bytes",
    "simulate",
    "simulate_sequential",
]
