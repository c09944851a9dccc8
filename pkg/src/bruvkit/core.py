"""Shared geometry and domain types for the BRUVS analysis pipeline.

Coordinates are frame-normalized reals in [0, 1] (x right, y down), so
detection data stays resolution-independent; pixel dimensions only matter
when rasters are rendered (see :mod:`bruvkit.analysis`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

SPECIES_LABEL_RE = re.compile(r"^[a-z0-9_]+$")

#: Pseudo-species assigned to kept tracks the expert never classified.
UNCLASSIFIED = "unclassified"


def validate_species_label(name: str) -> str:
    """Return ``name`` if it is a valid species label, else raise ValueError.

    Labels are lowercase ASCII words joined by underscores, e.g.
    ``carcharhinus_perezi``.
    """
    if not SPECIES_LABEL_RE.match(name):
        raise ValueError(f"invalid species label: {name!r} (expected [a-z0-9_]+)")
    return name


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box in frame-normalized coordinates, x1 < x2, y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(
                f"invalid box ({self.x1}, {self.y1}, {self.x2}, {self.y2}): "
                "need 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))


@dataclass(frozen=True, slots=True)
class Detection:
    """One detected box on one sampled frame of one video."""

    video_id: str
    frame_index: int
    time_ms: int
    box: BBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.frame_index < 0:
            raise ValueError(f"negative frame_index {self.frame_index}")
        if self.time_ms < 0:
            raise ValueError(f"negative time_ms {self.time_ms}")


class TrackStatus(str, Enum):
    ACTIVE = "active"
    LOST = "lost"
    FINISHED = "finished"


@dataclass(frozen=True)
class Track:
    """Identity-consistent, time-ordered sequence of detections.

    ``label`` is the expert species verdict (set during reconciliation);
    ``rejected`` marks tracks the expert deleted as false positives, which
    therefore never carry a label.
    """

    track_id: int
    detections: tuple[Detection, ...]
    status: TrackStatus = TrackStatus.FINISHED
    label: str | None = None
    rejected: bool = False

    def __post_init__(self) -> None:
        if self.track_id <= 0:
            raise ValueError(f"track_id must be positive, got {self.track_id}")
        if not self.detections:
            raise ValueError("track must contain at least one detection")
        object.__setattr__(self, "detections", tuple(self.detections))
        video_ids = {d.video_id for d in self.detections}
        if len(video_ids) != 1:
            raise ValueError(f"track spans multiple videos: {sorted(video_ids)}")
        frames = [d.frame_index for d in self.detections]
        if any(a >= b for a, b in zip(frames, frames[1:])):
            raise ValueError("detections must be strictly increasing in frame_index")
        if self.rejected and self.label is not None:
            raise ValueError("rejected track cannot carry a species label")
        if self.label is not None:
            validate_species_label(self.label)

    @property
    def video_id(self) -> str:
        return self.detections[0].video_id

    @property
    def max_confidence(self) -> float:
        return max(d.confidence for d in self.detections)

    def with_label(self, label: str | None) -> "Track":
        return Track(self.track_id, self.detections, self.status, label, False)

    def as_rejected(self) -> "Track":
        return Track(self.track_id, self.detections, self.status, None, True)


@dataclass(frozen=True, slots=True)
class VideoMeta:
    """Identity and raster dimensions of one input video."""

    video_id: str
    duration_ms: int
    frame_width_px: int
    frame_height_px: int

    def __post_init__(self) -> None:
        if self.duration_ms < 0:
            raise ValueError(f"negative duration_ms {self.duration_ms}")
        if self.frame_width_px <= 0 or self.frame_height_px <= 0:
            raise ValueError("frame dimensions must be positive")


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0 when interiors are disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def track_span_s(t: Track) -> float:
    """Wall-clock span of a track in seconds (0 for a single detection)."""
    return (t.detections[-1].time_ms - t.detections[0].time_ms) / 1000.0


def track_max_center_displacement(t: Track) -> float:
    """Largest distance of any detection center from the first one.

    Measured from the first detection (not consecutive deltas) so that
    jittering-but-stuck objects like algae still read as static.
    """
    cx0, cy0 = t.detections[0].box.center
    best = 0.0
    for d in t.detections[1:]:
        cx, cy = d.box.center
        best = max(best, math.hypot(cx - cx0, cy - cy0))
    return best
