"""Experiment orchestration: knob mapping, sweeps, benchmarks and the CLI."""

from .experiments import BenchReport, HistogramResult, bench, evaluate, histogram, make_benchmark, sweep_rows
from .mapping import SweepGrid, apply_mapping, default_mapping

__all__ = [
    "BenchReport",
    "HistogramResult",
    "SweepGrid",
    "apply_mapping",
    "bench",
    "default_mapping",
    "evaluate",
    "histogram",
    "make_benchmark",
    "sweep_rows",
]
