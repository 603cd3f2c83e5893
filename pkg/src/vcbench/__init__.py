"""Videoconferencing QoE benchmark toolkit.

Packet-trace lag analysis, media endpoint and topology discovery, data-rate
accounting, full-reference video/audio quality preprocessing and scoring, and
a deterministic session simulator that supplies ground truth for all of them.
"""

__version__ = "0.1.0"
