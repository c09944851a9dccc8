"""bruvkit: semi-automatic MaxN analysis of stationary underwater video.

Per-frame detections (from a reference file, a scripted synthetic scenario,
or a pluggable detector backend) are linked into tracks, false-positive
tracks are filtered out, an expert classifies each surviving track once,
and species-specific MaxN abundance indices fall out the other end.
"""

from .core import (
    BBox,
    Detection,
    Track,
    TrackStatus,
    VideoMeta,
    iou,
    track_max_center_displacement,
    track_span_s,
)

__all__ = [
    "BBox",
    "Detection",
    "Track",
    "TrackStatus",
    "VideoMeta",
    "iou",
    "track_max_center_displacement",
    "track_span_s",
]

__version__ = "0.1.0"
