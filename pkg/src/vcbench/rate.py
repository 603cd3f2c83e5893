"""Layer-7 data-rate series from packet traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyAfterWarmup
from .trace import Trace


@dataclass(frozen=True)
class RateSeries:
    bin_width: float
    origin: float
    byte_counts: tuple[int, ...]
    direction: str

    @property
    def bins(self) -> list[tuple[float, float]]:
        """(start seconds, bits per second) per bin."""
        return [(self.origin + i * self.bin_width, 8 * b / self.bin_width) for i, b in enumerate(self.byte_counts)]

    @property
    def bps(self) -> np.ndarray:
        return 8 * np.asarray(self.byte_counts, dtype=float) / self.bin_width

    def __len__(self):
        return len(self.byte_counts)


def payload_rate(trace: Trace, direction: str, bin_width: float = 1.0) -> RateSeries:
    """Bin payload bytes of one direction from capture start to the last packet."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    width_us = round(bin_width * 1e6)
    start = trace.capture_start_us
    recs = [r for r in trace.records if r.direction == direction]
    if not recs:
        return RateSeries(bin_width, start / 1e6, (), direction)
    last = trace.records[-1].ts_us
    counts = [0] * ((last - start) // width_us + 1)
    for r in recs:
        counts[(r.ts_us - start) // width_us] += r.payload_len
    return RateSeries(bin_width, start / 1e6, tuple(counts), direction)


@dataclass(frozen=True)
class RateSummary:
    mean_bps: float
    stddev_bps: float
    bins: int

    def to_dict(self):
        return {"mean_bps": self.mean_bps, "stddev_bps": self.stddev_bps, "bins": self.bins}


def rate_summary(series: RateSeries, warmup: float = 5.0) -> RateSummary:
    """Mean and population standard deviation of bins starting at or after ``warmup``."""
    kept = [bps for start, bps in series.bins if start - series.origin >= warmup - 1e-9]
    if not kept:
        raise EmptyAfterWarmup(f"no bins left after {warmup}s warmup")
    arr = np.asarray(kept)
    return RateSummary(float(arr.mean()), float(arr.std()), len(kept))
