from .frames import (Frame, FrameSequence, PreprocessSpec, detect_padding, preprocess, read_raw_luma,
                     read_video, read_y4m, resize_bilinear, rgb_to_luma, write_y4m)
from .metrics import ms_ssim, psnr, ssim, vifp
from .quality import QualityScore, align_temporal, sequence_score, trim_to_offset

__all__ = [
    "Frame", "FrameSequence", "PreprocessSpec", "QualityScore", "align_temporal", "detect_padding",
    "ms_ssim", "preprocess", "psnr", "read_raw_luma", "read_video", "read_y4m", "resize_bilinear",
    "rgb_to_luma", "sequence_score", "ssim", "trim_to_offset", "vifp", "write_y4m",
]
