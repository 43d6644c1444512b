"""
Pipeline package: decoupled and interleaved scheduling of decoding and tool calls.
"""

from .base_pipeline import BasePipeline, ItemReport, Reifier, RunReport, WorkItem, load_trace_items, load_workload
from .clock import Clock, MonotonicClock, VirtualClock, make_clock
from .compare import SpeedupSummary, compare_modes, schedule_oracle, write_bench_outputs
from .decoupled import DecoupledPipeline, run_decoupled
from .generator import Chunk, LatencyModel, ReplayGenerator, split_chunks
from .interleaved import InterleavedPipeline, run_interleaved

__all__ = [
    "BasePipeline",
    "Chunk",
    "Clock",
    "DecoupledPipeline",
    "InterleavedPipeline",
    "ItemReport",
    "LatencyModel",
    "MonotonicClock",
    "Reifier",
    "ReplayGenerator",
    "RunReport",
    "SpeedupSummary",
    "VirtualClock",
    "WorkItem",
    "compare_modes",
    "load_trace_items",
    "load_workload",
    "make_clock",
    "run_decoupled",
    "run_interleaved",
    "schedule_oracle",
    "split_chunks",
    "write_bench_outputs",
]
