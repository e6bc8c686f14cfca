"""Simulator for shared-cache partitioning experiments on Arm SoC presets."""
from .engine import LatencyTable, MemController, System, run
from .geometry import CacheGeometry, PlatformConfig, platform_preset
from .harness import RunSettings, SweepGrid, run_baseline, run_cell, sweep
from .pmu import EventId, PmuSnapshot

__all__ = [
    "CacheGeometry", "EventId", "LatencyTable", "MemController", "PlatformConfig", "PmuSnapshot",
    "RunSettings", "SweepGrid", "System", "platform_preset", "run", "run_baseline", "run_cell",
    "sweep",
]
