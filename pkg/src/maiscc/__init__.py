"""Joint antenna placement and beamforming for sensing, communication and control.

A base station with movable antennas serves ground users, illuminates sensing
targets and keeps controlled vehicles above the data rate their LQG loops
need.  Antenna positions are searched by a particle swarm and beams by
successive convex approximation over a semidefinite relaxation.
"""
from .control import ControlPlant, default_plant, derive
from .driver import AoResult, alternating_optimize, fap_baseline, rap_baseline
from .scenario import AoParams, ConfigError, PsoParams, ScenarioConfig, load_config

__all__ = [
    "AoParams",
    "AoResult",
    "ConfigError",
    "ControlPlant",
    "PsoParams",
    "ScenarioConfig",
    "alternating_optimize",
    "default_plant",
    "derive",
    "fap_baseline",
    "load_config",
    "rap_baseline",
]
