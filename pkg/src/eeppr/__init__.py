"""Event-based periodic phenomenon rate estimation.

Events are binned into a sparse voxel grid, each spatial window is
correlated along time against its own leading slab, and the median period
over windows gives the rate.
"""

from ._accel import BACKEND
from .baselines import FFTBaselineResult, SimpleBaselineResult, fft_baseline, median_filter_3x3, simple_baseline
from .core import (
    EepprConfig,
    PeakParams,
    RateEstimate,
    ResponseSeries,
    Template,
    WindowEstimate,
    aggregate_periods,
    correlate_time,
    detect_peaks,
    estimate,
    rate_from_period,
    select_template,
    window_period,
)
from .errors import *  # noqa: F401,F403
from .events import AreaRef, Event, EventStream, VoxelGrid, make_stream, quantize, split_windows, validate_stream
from .io import read_events, write_events
from .synth import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AreaRef",
    "EepprConfig",
    "Event",
    "EventStream",
    "FFTBaselineResult",
    "PeakParams",
    "RateEstimate",
    "ResponseSeries",
    "SimpleBaselineResult",
    "SynthSpec",
    "Template",
    "VoxelGrid",
    "WindowEstimate",
    "aggregate_periods",
    "correlate_time",
    "detect_peaks",
    "estimate",
    "fft_baseline",
    "generate",
    "make_stream",
    "median_filter_3x3",
    "quantize",
    "rate_from_period",
    "read_events",
    "select_template",
    "simple_baseline",
    "split_windows",
    "validate_stream",
    "window_period",
    "write_events",
]
