"""Audio preprocessing for listening-quality scoring.

Integrated loudness follows ITU-R BS.1770 (K-weighting, 400 ms gating blocks,
absolute and relative gates).  Offsets between a reference and a recording
are found by correlating log-energy envelopes.
"""

from __future__ import annotations

import math
import os
import wave
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import AllGated, EmptyOverlap, InputError, NoConfidentPeak, TooShort

SAMPLE_RATE = 48000
FULL_SCALE = 32768.0

# K-weighting biquads at 48 kHz: high-shelf pre-filter then RLB high-pass
K_WEIGHTING_SOS = np.array([
    [1.53512485958697, -2.69169618940638, 1.19839281085285, 1.0, -1.69065929318241, 0.73248077421585],
    [1.0, -2.0, 1.0, 1.0, -1.99004745483398, 0.99007225036621],
])
BLOCK_SECONDS = 0.4
BLOCK_OVERLAP = 0.75
ABSOLUTE_GATE = -70.0
RELATIVE_GATE = -10.0
LOUDNESS_OFFSET = -0.691

ENVELOPE_HOP = 0.020
ENVELOPE_WINDOW = 0.040
MIN_PEAK_CORRELATION = 0.3
MIN_OVERLAP_SECONDS = 1.0


@dataclass(frozen=True)
class AudioBuffer:
    """PCM audio as a float array of shape (frames, channels) in [-1, 1)."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[1] not in (1, 2):
            raise InputError("audio must have 1 or 2 channels")
        if self.sample_rate != SAMPLE_RATE:
            raise InputError(f"only {SAMPLE_RATE} Hz audio is supported, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def frames(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.frames / self.sample_rate

    def mono(self) -> np.ndarray:
        return self.samples.mean(axis=1)


def read_wav(path) -> AudioBuffer:
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2 or wf.getcomptype() != "NONE":
            raise InputError(f"{path}: only 16-bit PCM WAV is supported")
        channels, rate = wf.getnchannels(), wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    data = np.frombuffer(raw, dtype="<i2").reshape(-1, channels) / FULL_SCALE
    return AudioBuffer(data, rate)


def to_pcm16(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x * FULL_SCALE), -32768, 32767).astype("<i2")


def write_wav(path, audio: AudioBuffer, mono: bool = False) -> None:
    data = audio.mono()[:, None] if mono else audio.samples
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(data.shape[1])
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(to_pcm16(data).tobytes())


@dataclass(frozen=True)
class LoudnessStats:
    integrated: float
    gating_block_count: int


def k_weight(samples: np.ndarray) -> np.ndarray:
    return signal.sosfilt(K_WEIGHTING_SOS, samples, axis=0)


def block_powers(audio: AudioBuffer) -> np.ndarray:
    """Channel-summed mean-square K-weighted power of each 400 ms gating block."""
    block = round(BLOCK_SECONDS * audio.sample_rate)
    hop = round(block * (1 - BLOCK_OVERLAP))
    if audio.frames < block:
        raise TooShort(f"{audio.duration:.3f}s is shorter than one {BLOCK_SECONDS}s block")
    sq = k_weight(audio.samples) ** 2
    csum = np.concatenate([np.zeros((1, audio.channels)), np.cumsum(sq, axis=0)])
    starts = np.arange(0, audio.frames - block + 1, hop)
    per_channel = (csum[starts + block] - csum[starts]) / block
    return per_channel.sum(axis=1)


def _loudness(power):
    return LOUDNESS_OFFSET + 10 * np.log10(power)


def integrated_loudness(audio: AudioBuffer) -> LoudnessStats:
    z = block_powers(audio)
    with np.errstate(divide="ignore"):
        levels = _loudness(z)
    kept = z[levels > ABSOLUTE_GATE]
    if not kept.size:
        raise AllGated("every block is below the absolute gate")
    relative = _loudness(kept.mean()) + RELATIVE_GATE
    with np.errstate(divide="ignore"):
        gated = kept[_loudness(kept) > relative]
    if not gated.size:
        raise AllGated("every block is below the relative gate")
    return LoudnessStats(float(_loudness(gated.mean())), int(gated.size))


@dataclass(frozen=True)
class Normalized:
    audio: AudioBuffer
    gain_db: float
    clipped: int
    input_loudness: float


def normalize_loudness(audio: AudioBuffer, target: float = -23.0) -> Normalized:
    """Apply one gain so integrated loudness hits ``target``; clip to [-1, 1)."""
    measured = integrated_loudness(audio).integrated
    gain_db = target - measured
    scaled = audio.samples * 10 ** (gain_db / 20)
    hi = (FULL_SCALE - 1) / FULL_SCALE
    clipped = int(np.count_nonzero((scaled < -1.0) | (scaled > hi)))
    return Normalized(AudioBuffer(np.clip(scaled, -1.0, hi), audio.sample_rate), gain_db, clipped, measured)


def log_energy_envelope(x: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    hop = round(ENVELOPE_HOP * sample_rate)
    win = round(ENVELOPE_WINDOW * sample_rate)
    if len(x) < win:
        return np.zeros(0)
    csum = np.concatenate([[0.0], np.cumsum(x.astype(np.float64) ** 2)])
    starts = np.arange(0, len(x) - win + 1, hop)
    return np.log((csum[starts + win] - csum[starts]) / win + 1e-10)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / denom if denom > 0 else 0.0


def envelope_correlation(ref_env: np.ndarray, deg_env: np.ndarray, max_lag: int, min_overlap: int):
    """Pearson correlation of ref_env[k] with deg_env[k + lag] for each lag."""
    lags = np.arange(-max_lag, max_lag + 1)
    corr = np.full(len(lags), np.nan)
    for n, lag in enumerate(lags):
        lo = max(0, -lag)
        hi = min(len(ref_env), len(deg_env) - lag)
        if hi - lo >= min_overlap:
            corr[n] = _pearson(ref_env[lo:hi], deg_env[lo + lag:hi + lag])
    return lags, corr


def find_offset(reference: AudioBuffer, degraded: AudioBuffer, max_offset: float = 10.0) -> float:
    """Delay of ``degraded`` relative to ``reference`` in seconds (positive: degraded is late)."""
    if reference.duration < 1.0 or degraded.duration < 1.0:
        raise TooShort("offset search needs at least 1 s of audio on both sides")
    ref_env = log_energy_envelope(reference.mono(), reference.sample_rate)
    deg_env = log_energy_envelope(degraded.mono(), degraded.sample_rate)
    max_lag = int(round(max_offset / ENVELOPE_HOP))
    min_overlap = int(round(MIN_OVERLAP_SECONDS / ENVELOPE_HOP))
    lags, corr = envelope_correlation(ref_env, deg_env, max_lag, min_overlap)
    if np.all(np.isnan(corr)):
        raise NoConfidentPeak("recordings do not overlap enough for any candidate offset")
    k = int(np.nanargmax(corr))
    peak = corr[k]
    if peak < MIN_PEAK_CORRELATION:
        raise NoConfidentPeak(f"peak envelope correlation {peak:.3f} < {MIN_PEAK_CORRELATION}")
    shift = 0.0
    if 0 < k < len(corr) - 1 and not np.isnan(corr[k - 1]) and not np.isnan(corr[k + 1]):
        left, right = corr[k - 1], corr[k + 1]
        curvature = left - 2 * peak + right
        if curvature < 0:
            shift = 0.5 * (left - right) / curvature
    return float((lags[k] + shift) * ENVELOPE_HOP)


def trim_align(reference: AudioBuffer, degraded: AudioBuffer, offset: float):
    """Drop the leading ``offset`` from the late side and cut both to equal length."""
    n = int(round(offset * reference.sample_rate))
    ref, deg = reference.samples, degraded.samples
    if n > 0:
        deg = deg[n:]
    elif n < 0:
        ref = ref[-n:]
    length = min(len(ref), len(deg))
    if length <= 0:
        raise EmptyOverlap(f"offset {offset}s leaves no overlapping audio")
    return AudioBuffer(ref[:length], reference.sample_rate), AudioBuffer(deg[:length], degraded.sample_rate)


def export_pair(reference: AudioBuffer, degraded: AudioBuffer, prefix) -> tuple[str, str]:
    """Write mono 16-bit WAV files ``<prefix>ref.wav`` and ``<prefix>deg.wav`` for an external scorer."""
    if reference.frames == 0 or degraded.frames == 0:
        raise InputError("cannot export an empty audio buffer")
    prefix = os.fspath(prefix)
    paths = (prefix + "ref.wav", prefix + "deg.wav")
    for path, audio in zip(paths, (reference, degraded)):
        write_wav(path, audio, mono=True)
    return paths


def validate_mos(score: float) -> float:
    """MOS-LQO from an external scorer must lie on the 1-5 scale."""
    score = float(score)
    if not 1.0 <= score <= 5.0:
        raise InputError(f"MOS-LQO {score} outside [1, 5]")
    return score
