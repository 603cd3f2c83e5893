"""Synthetic video feeds and a rate-limited codec proxy.

The proxy is a closed-loop residual quantizer: each frame is coded as the
quantized difference from the previous reconstruction, with the coarsest
quantizer step needed to fit the per-frame bit budget.  Feeds with more
temporal change need coarser steps at the same rate, which is the property
the quality analysis relies on.  It is not a model of any real encoder.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..video.frames import Frame, FrameSequence

LOW_MOTION = "low"
HIGH_MOTION = "high"
PAN_STEP = 7  # pixels per frame in the high-motion feed
_Q_LADDER = 2.0 ** (np.arange(0, 41) / 4)


def _texture(rng, height, width, smooth=2.0, contrast=60.0):
    noise = ndimage.gaussian_filter(rng.standard_normal((height, width)), smooth)
    noise /= noise.std() or 1.0
    return 128 + contrast * noise


def render_feed(kind: str, n_frames: int = 60, width: int = 192, height: int = 192, seed: int = 0,
                frame_rate: float = 30.0) -> FrameSequence:
    """Low motion: static backdrop with a slowly swaying textured figure.
    High motion: a fast pan over a textured scene with a cut every second."""
    rng = np.random.default_rng(seed)
    frames = []
    if kind == LOW_MOTION:
        backdrop = _texture(rng, height, width, smooth=6.0, contrast=25.0)
        figure = _texture(rng, height, width, smooth=1.5, contrast=40.0)
        yy, xx = np.mgrid[0:height, 0:width]
        for i in range(n_frames):
            cx = width / 2 + 3 * np.sin(2 * np.pi * i / 45)
            cy = height * 0.6 + np.sin(2 * np.pi * i / 70)
            mask = ((xx - cx) / (width * 0.18)) ** 2 + ((yy - cy) / (height * 0.3)) ** 2 <= 1
            img = np.where(mask, figure, backdrop)
            frames.append(Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8)))
    elif kind == HIGH_MOTION:
        scene = None
        cut = int(frame_rate)
        for i in range(n_frames):
            if i % cut == 0:
                scene = _texture(rng, height * 2, width + PAN_STEP * cut, smooth=1.2, contrast=55.0)
            dx = (i % cut) * PAN_STEP
            dy = int(6 * np.sin(i / 4))
            img = np.roll(scene, dy, axis=0)[height // 2:height // 2 + height, dx:dx + width]
            frames.append(Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8)))
    else:
        raise ValueError(f"unknown feed kind {kind!r}")
    return FrameSequence(frames, frame_rate)


def _residual_bits(levels: np.ndarray) -> float:
    nz = levels[levels != 0]
    return float(np.sum(2 + 2 * np.log2(1 + np.abs(nz))))


def codec_proxy(seq: FrameSequence, bitrate_bps: float) -> FrameSequence:
    """Degrade a sequence as a codec with a ``bitrate_bps`` budget would, deterministically."""
    if bitrate_bps <= 0:
        raise ValueError("bitrate must be positive")
    budget = bitrate_bps / seq.frame_rate
    recon = np.full(seq.shape, 128.0)
    out = []
    for frame in seq:
        residual = frame.luma.astype(np.float64) - recon
        for q in _Q_LADDER:
            levels = np.rint(residual / q)
            if _residual_bits(levels) <= budget:
                break
        recon = np.clip(recon + levels * q, 0, 255)
        out.append(Frame(np.rint(recon).astype(np.uint8)))
    return FrameSequence(out, seq.frame_rate)
