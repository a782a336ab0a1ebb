"""Pulse sequences: types, text format, sweep engine and preset experiments."""
from .dsl import Pulse, PulseSequence, Sweep, parse_sequence, render
from .engine import (
    SimulationContext,
    SweepMean,
    context_at,
    max_workers,
    mean_point,
    mean_sweep,
    point_rng,
    run_point,
    run_sweep,
    sample_sweep,
)
from .presets import DEFAULTS, PRESETS, preset

__all__ = [
    "Pulse", "PulseSequence", "Sweep", "parse_sequence", "render",
    "SimulationContext", "SweepMean", "context_at", "max_workers", "mean_point", "mean_sweep",
    "point_rng", "run_point", "run_sweep", "sample_sweep",
    "DEFAULTS", "PRESETS", "preset",
]
