"""Adaptive 1-bit RIS control with single-bit UE feedback.

Simulator and library: hexagonal RIS geometry, the RIS-reflected mmWave
channel model, the subgroup-flip adaptation loop with its feedback
protocol, a random-search benchmark and an area-of-interest mobility
harness.
"""

__version__ = "0.1.0"

from adaptris.geometry import (
    GroupSchedule,
    RisLayout,
    build_hex_layout,
    paper_group_schedule,
    validate_schedule_collinearity,
)
from adaptris.channel import (
    ACTIVE_ALPHABET,
    PatternModel,
    PowerMeter,
    ReflectionAlphabet,
    ReflectionConfig,
    Scenario,
    channel_coefficient,
    combined_pattern,
    measure_power,
    received_power_dbm,
)
from adaptris.control import (
    AdaptationReport,
    exhaustive_optimize,
    flip_subgroup,
    iterative_adapt,
    mc_optimize,
    random_config,
    switch_element,
)

__all__ = [
    "ACTIVE_ALPHABET",
    "AdaptationReport",
    "GroupSchedule",
    "PatternModel",
    "PowerMeter",
    "ReflectionAlphabet",
    "ReflectionConfig",
    "RisLayout",
    "Scenario",
    "build_hex_layout",
    "channel_coefficient",
    "combined_pattern",
    "exhaustive_optimize",
    "flip_subgroup",
    "iterative_adapt",
    "mc_optimize",
    "measure_power",
    "paper_group_schedule",
    "random_config",
    "received_power_dbm",
    "switch_element",
    "validate_schedule_collinearity",
]
