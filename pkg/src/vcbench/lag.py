"""Streaming-lag measurement from flash-signal onsets in packet traces.

A sender that shows a blank screen with periodic flashes produces bursts of
large packets separated by quiet stretches.  The first large packet after a
quiet stretch marks a flash; pairing sender-side and receiver-side marks
gives one lag sample per delivered flash.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

from .errors import EmptySamples, NegativeLag
from .trace import INBOUND, OUTBOUND, Trace, rebase_clock


@dataclass(frozen=True)
class OnsetDetectorConfig:
    size_threshold: int = 200
    quiescence: float = 1.0
    period_hint: float = 2.0

    def __post_init__(self):
        if self.size_threshold <= 0:
            raise ValueError("size_threshold must be positive")
        if not 0 < self.quiescence < self.period_hint:
            raise ValueError("need 0 < quiescence < period_hint")

    @property
    def window_us(self) -> int:
        return round(self.period_hint * 1e6 / 2)


@dataclass(frozen=True)
class Onset:
    ts_us: int
    packet_index: int

    @property
    def timestamp(self) -> float:
        return self.ts_us / 1e6


@dataclass(frozen=True)
class LagSample:
    sender_onset: float
    receiver_onset: float
    lag_us: int

    @property
    def lag(self) -> float:
        return self.lag_us / 1e6


@dataclass(frozen=True)
class Pairing:
    samples: list[LagSample]
    unmatched_sender: int
    unmatched_receiver: int

    def __len__(self):
        return len(self.samples)

    @property
    def lags(self) -> list[float]:
        return [s.lag for s in self.samples]


def detect_onsets(trace: Trace, direction: str, cfg: OnsetDetectorConfig = OnsetDetectorConfig()) -> list[Onset]:
    """Return the first big packet of every burst in one direction.

    A packet is big when its payload exceeds ``cfg.size_threshold``; it starts
    a burst when the gap since the previous big packet is strictly longer than
    ``cfg.quiescence``.
    """
    quiet_us = round(cfg.quiescence * 1e6)
    onsets = []
    last = None
    for i, rec in enumerate(trace.records):
        if rec.direction != direction or rec.payload_len <= cfg.size_threshold:
            continue
        if last is None or rec.ts_us - last > quiet_us:
            onsets.append(Onset(rec.ts_us, i))
        last = rec.ts_us
    return onsets


def pair_onsets(sender: list[Onset], receiver: list[Onset],
                cfg: OnsetDetectorConfig = OnsetDetectorConfig()) -> Pairing:
    """Match each receiver onset to the latest sender onset at or before it.

    Matches further apart than half a flash period are rejected, and a sender
    onset is consumed by the earliest receiver onset that claims it.  A
    receiver onset with no sender onset before it, but one shortly after it,
    means the clocks are misaligned and raises :class:`NegativeLag`.
    """
    window = cfg.window_us
    send_ts = [o.ts_us for o in sender]
    used = set()
    samples = []
    unmatched_rx = 0
    for rx in receiver:
        k = bisect.bisect_right(send_ts, rx.ts_us) - 1
        if k >= 0 and rx.ts_us - send_ts[k] < window:
            if k in used:
                unmatched_rx += 1
                continue
            used.add(k)
            samples.append(LagSample(send_ts[k] / 1e6, rx.ts_us / 1e6, rx.ts_us - send_ts[k]))
            continue
        nxt = k + 1
        if nxt < len(send_ts) and send_ts[nxt] - rx.ts_us < window:
            raise NegativeLag(
                f"receiver onset at {rx.ts_us / 1e6:.6f}s precedes sender onset at {send_ts[nxt] / 1e6:.6f}s"
            )
        unmatched_rx += 1
    samples.sort(key=lambda s: s.sender_onset)
    return Pairing(samples, len(sender) - len(used), unmatched_rx)


@dataclass(frozen=True)
class LagDistribution:
    samples: tuple[float, ...] = field(default_factory=tuple)

    @property
    def count(self) -> int:
        return len(self.samples)

    def percentile(self, p: float) -> float:
        """Nearest-rank percentile."""
        if not self.samples:
            raise EmptySamples("no lag samples")
        if not 0 <= p <= 100:
            raise ValueError("percentile must be in [0, 100]")
        rank = max(1, math.ceil(p / 100 * len(self.samples)))
        return self.samples[rank - 1]

    @property
    def median(self) -> float:
        return self.percentile(50)


def lag_distribution(samples) -> LagDistribution:
    lags = [s.lag if isinstance(s, LagSample) else float(s) for s in samples]
    return LagDistribution(tuple(sorted(lags)))


def measure_lag(sender: Trace, receiver: Trace, cfg: OnsetDetectorConfig = OnsetDetectorConfig(),
                receiver_offset: float = 0.0) -> Pairing:
    """Detect outbound onsets on the sender, inbound onsets on the receiver, and pair them."""
    if receiver_offset:
        receiver = rebase_clock(receiver, receiver_offset)
    return pair_onsets(detect_onsets(sender, OUTBOUND, cfg), detect_onsets(receiver, INBOUND, cfg), cfg)
