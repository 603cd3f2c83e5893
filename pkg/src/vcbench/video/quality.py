"""Sequence-level scoring and temporal alignment of recorded video."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, InsufficientOverlap, LengthMismatch
from .frames import FrameSequence
from .metrics import metric_function, ssim

MIN_SAMPLED_OVERLAP = 10


@dataclass(frozen=True)
class QualityScore:
    metric: str
    per_frame: tuple[float, ...]

    @property
    def aggregate(self) -> float:
        # numpy sums in frame order with pairwise summation
        return float(np.sum(np.asarray(self.per_frame, dtype=np.float64)) / len(self.per_frame))

    def to_dict(self, with_frames: bool = True) -> dict:
        d = {"metric": self.metric, "aggregate": self.aggregate, "frames": len(self.per_frame)}
        if with_frames:
            d["per_frame"] = list(self.per_frame)
        return d


def sequence_score(ref: FrameSequence, deg: FrameSequence, metric: str) -> QualityScore:
    if len(ref) != len(deg):
        raise LengthMismatch(f"{len(ref)} reference frames vs {len(deg)} degraded frames")
    if not len(ref):
        raise LengthMismatch("empty sequences")
    if ref.shape != deg.shape:
        raise DimensionMismatch(f"{ref.shape} vs {deg.shape}")
    name, fn = metric_function(metric)
    return QualityScore(name, tuple(fn(r, d) for r, d in zip(ref, deg)))


def _overlap(n_ref: int, n_deg: int, offset: int) -> range:
    # reference frame i lines up with degraded frame i + offset
    return range(max(0, -offset), min(n_ref, n_deg - offset))


def align_temporal(reference: FrameSequence, degraded: FrameSequence, max_offset_frames: int,
                   step: int = 5) -> int:
    """Frame offset in [-max, max] maximizing mean SSIM over sampled overlapping frames.

    A positive offset means the degraded sequence lags the reference.  Offsets
    with fewer than ten sampled frames of overlap are not considered; ties go
    to the smaller magnitude (then the negative side).
    """
    if max_offset_frames < 0:
        raise ValueError("max_offset_frames must be >= 0")
    if step < 1:
        raise ValueError("step must be >= 1")
    if reference.shape != degraded.shape:
        raise DimensionMismatch(f"{reference.shape} vs {degraded.shape}")
    cache = {}

    def pair_ssim(i, j):
        if (i, j) not in cache:
            cache[(i, j)] = ssim(reference[i], degraded[j])
        return cache[(i, j)]

    best = None
    for offset in sorted(range(-max_offset_frames, max_offset_frames + 1), key=lambda o: (abs(o), o)):
        idx = _overlap(len(reference), len(degraded), offset)[::step]
        if len(idx) < MIN_SAMPLED_OVERLAP:
            continue
        score = float(np.mean([pair_ssim(i, i + offset) for i in idx]))
        if best is None or score > best[0]:
            best = (score, offset)
    if best is None:
        raise InsufficientOverlap(
            f"no offset within +/-{max_offset_frames} leaves {MIN_SAMPLED_OVERLAP} sampled frames"
        )
    return best[1]


def trim_to_offset(reference: FrameSequence, degraded: FrameSequence, offset: int):
    idx = _overlap(len(reference), len(degraded), offset)
    return reference[idx.start:idx.stop], degraded[idx.start + offset:idx.stop + offset]
