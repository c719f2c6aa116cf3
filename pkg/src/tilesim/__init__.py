"""Flit-level simulator for tiled manycore grids.

Functional execution of message-driven kernels over a cycle-accurate
network and memory model, with energy, area and dollar-cost reporting.
"""

from .arch import (
    MachineConfig, DramConfig, ConfigError,
    parse_config, serialize_config, apply_setting,
    MESH, TORUS, SPM_SCRATCHPAD, SPM_CACHE_DIRECT, SPM_CACHE_ASSOC,
)
from .params import ModelParams

__all__ = [
    "MachineConfig", "DramConfig", "ConfigError", "ModelParams",
    "parse_config", "serialize_config", "apply_setting",
    "MESH", "TORUS", "SPM_SCRATCHPAD", "SPM_CACHE_DIRECT", "SPM_CACHE_ASSOC",
]

__version__ = "0.1.0"
