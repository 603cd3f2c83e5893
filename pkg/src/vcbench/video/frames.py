"""Raw video frames, Y4M / raw-luma I/O and geometric preprocessing."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from ..errors import CropOutOfBounds, DimensionMismatch, InputError


@dataclass(frozen=True)
class Frame:
    luma: np.ndarray
    chroma: Optional[tuple] = None

    def __post_init__(self):
        luma = np.asarray(self.luma)
        if luma.ndim != 2:
            raise ValueError("luma must be a 2-D array")
        if luma.dtype != np.uint8:
            if luma.min(initial=0) < 0 or luma.max(initial=0) > 255:
                raise ValueError("luma samples must lie in [0, 255]")
            luma = luma.astype(np.uint8)
        object.__setattr__(self, "luma", luma)

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @property
    def shape(self):
        return self.luma.shape


@dataclass(frozen=True)
class FrameSequence:
    frames: list = field(default_factory=list)
    frame_rate: float = 30.0

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        shapes = {f.shape for f in self.frames}
        if len(shapes) > 1:
            raise DimensionMismatch(f"frames have differing dimensions {sorted(shapes)}")

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return FrameSequence(self.frames[i], self.frame_rate)
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def shape(self):
        return self.frames[0].shape if self.frames else None

    @classmethod
    def from_array(cls, arr, frame_rate: float = 30.0) -> "FrameSequence":
        return cls([Frame(a) for a in np.asarray(arr)], frame_rate)


def rgb_to_luma(rgb) -> np.ndarray:
    """Full-range BT.601 luma of an (H, W, 3) RGB image."""
    rgb = np.asarray(rgb, dtype=np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


# --- Y4M ---------------------------------------------------------------------

def _parse_y4m_header(line: bytes) -> dict:
    tokens = line.decode("ascii").split()
    if not tokens or tokens[0] != "YUV4MPEG2":
        raise InputError("not a YUV4MPEG2 stream")
    info = {"C": "420jpeg", "F": "30:1"}
    for tok in tokens[1:]:
        info[tok[0]] = tok[1:]
    if "W" not in info or "H" not in info:
        raise InputError("Y4M header lacks W/H")
    return info


def read_y4m(path_or_bytes) -> FrameSequence:
    """Read an 8-bit 4:2:0 (or mono) YUV4MPEG2 stream."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise InputError("Y4M header not terminated")
    info = _parse_y4m_header(data[:nl])
    w, h = int(info["W"]), int(info["H"])
    colour = info["C"]
    if colour.startswith("420"):
        cw, ch = (w + 1) // 2, (h + 1) // 2
    elif colour == "mono":
        cw = ch = 0
    else:
        raise InputError(f"unsupported Y4M colour space {colour}")
    rate = float(Fraction(info["F"].replace(":", "/")))
    frames = []
    pos = nl + 1
    ysize, csize = w * h, cw * ch
    while pos < len(data):
        eol = data.find(b"\n", pos)
        if eol < 0 or not data.startswith(b"FRAME", pos):
            raise InputError(f"bad FRAME marker at offset {pos}")
        pos = eol + 1
        need = ysize + 2 * csize
        if len(data) - pos < need:
            raise InputError("truncated Y4M frame")
        y = np.frombuffer(data, np.uint8, ysize, pos).reshape(h, w)
        chroma = None
        if csize:
            u = np.frombuffer(data, np.uint8, csize, pos + ysize).reshape(ch, cw)
            v = np.frombuffer(data, np.uint8, csize, pos + ysize + csize).reshape(ch, cw)
            chroma = (u, v)
        frames.append(Frame(y, chroma))
        pos += need
    return FrameSequence(frames, rate)


def write_y4m(seq: FrameSequence, path=None) -> bytes:
    h, w = seq.shape
    rate = Fraction(seq.frame_rate).limit_denominator(1001)
    parts = [f"YUV4MPEG2 W{w} H{h} F{rate.numerator}:{rate.denominator} Ip A1:1 C420jpeg\n".encode()]
    grey = np.full(((h + 1) // 2, (w + 1) // 2), 128, np.uint8)
    for f in seq:
        u, v = f.chroma if f.chroma is not None else (grey, grey)
        parts += [b"FRAME\n", f.luma.tobytes(), np.asarray(u, np.uint8).tobytes(), np.asarray(v, np.uint8).tobytes()]
    data = b"".join(parts)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def read_raw_luma(path, width: Optional[int] = None, height: Optional[int] = None,
                  frame_rate: Optional[float] = None) -> FrameSequence:
    """Read planar Y-only frames.  Missing dims come from a ``<path>.json`` sidecar."""
    sidecar = str(path) + ".json"
    if (width is None or height is None) and os.path.exists(sidecar):
        with open(sidecar) as fh:
            meta = json.load(fh)
        width = width or meta["width"]
        height = height or meta["height"]
        frame_rate = frame_rate or meta.get("frame_rate")
    if width is None or height is None:
        raise InputError(f"dimensions for {path} not given and no sidecar found")
    raw = np.fromfile(path, dtype=np.uint8)
    size = width * height
    if raw.size % size:
        raise InputError(f"{path}: {raw.size} bytes is not a multiple of {width}x{height}")
    return FrameSequence.from_array(raw.reshape(-1, height, width), frame_rate or 30.0)


def read_video(path, dims: Optional[tuple[int, int]] = None) -> FrameSequence:
    if str(path).endswith(".y4m"):
        return read_y4m(path)
    w, h = dims if dims else (None, None)
    return read_raw_luma(path, w, h)


# --- preprocessing -------------------------------------------------------------

@dataclass(frozen=True)
class PreprocessSpec:
    crop: tuple[int, int, int, int]
    target: tuple[int, int]

    def validate(self, width: int, height: int):
        x, y, w, h = self.crop
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise CropOutOfBounds(f"crop {self.crop} outside {width}x{height}")
        if self.target[0] <= 0 or self.target[1] <= 0:
            raise ValueError("target dimensions must be positive")


def _bilinear_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize with pixel-centre alignment and edge clamping."""
    h, w = img.shape
    if (w, h) == (width, height):
        return img.copy()
    a = img.astype(np.float64)
    r0, r1, fr = _bilinear_axis(h, height)
    a = a[r0] * (1 - fr)[:, None] + a[r1] * fr[:, None]
    c0, c1, fc = _bilinear_axis(w, width)
    a = a[:, c0] * (1 - fc) + a[:, c1] * fc
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def preprocess(seq: FrameSequence, spec: PreprocessSpec) -> FrameSequence:
    """Crop every frame to ``spec.crop`` then resize it to ``spec.target``."""
    if not len(seq):
        return seq
    h, w = seq.shape
    spec.validate(w, h)
    x, y, cw, ch = spec.crop
    tw, th = spec.target
    return FrameSequence(
        [Frame(resize_bilinear(f.luma[y:y + ch, x:x + cw], tw, th)) for f in seq], seq.frame_rate
    )


def detect_padding(frame: Frame, tolerance: int = 8) -> tuple[int, int, int, int]:
    """Crop rectangle that strips uniform border rows/columns (range <= tolerance)."""
    luma = frame.luma.astype(np.int16)
    flat_rows = (luma.max(axis=1) - luma.min(axis=1)) <= tolerance
    flat_cols = (luma.max(axis=0) - luma.min(axis=0)) <= tolerance
    if flat_rows.all() or flat_cols.all():
        return (0, 0, frame.width, frame.height)

    def run(mask):
        return int(np.argmin(mask)) if not mask.all() else len(mask)

    top, bottom = run(flat_rows), run(flat_rows[::-1])
    left, right = run(flat_cols), run(flat_cols[::-1])
    return (left, top, frame.width - left - right, frame.height - top - bottom)
