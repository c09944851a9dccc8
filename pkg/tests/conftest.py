from __future__ import annotations

import random

import pytest

from bruvkit.core import BBox, Detection, Track, TrackStatus


def box_at(cx: float, cy: float, w: float = 0.1, h: float = 0.1) -> BBox:
    return BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def make_track(
    track_id: int,
    centers: list[tuple[float, float]],
    confidences: list[float] | float = 0.8,
    video_id: str = "v1",
    start_frame: int = 0,
    label: str | None = None,
    w: float = 0.1,
    h: float = 0.1,
    fps: float = 3.0,
) -> Track:
    if isinstance(confidences, float):
        confidences = [confidences] * len(centers)
    dets = tuple(
        Detection(
            video_id,
            start_frame + i,
            round((start_frame + i) * 1000 / fps),
            box_at(cx, cy, w, h),
            conf,
        )
        for i, ((cx, cy), conf) in enumerate(zip(centers, confidences))
    )
    return Track(track_id=track_id, detections=dets, status=TrackStatus.FINISHED, label=label)


def random_walk_track(
    rng: random.Random,
    track_id: int,
    video_id: str = "v1",
    label: str | None = None,
    max_len: int = 12,
) -> Track:
    """Track with random length, start frame, drift, and confidences."""
    n = rng.randint(1, max_len)
    start = rng.randint(0, 30)
    cx, cy = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)
    step = rng.uniform(0.0, 0.04)
    centers = []
    for _ in range(n):
        centers.append((cx, cy))
        cx = min(max(cx + rng.uniform(-step, step), 0.1), 0.9)
        cy = min(max(cy + rng.uniform(-step, step), 0.1), 0.9)
    confs = [rng.uniform(0.2, 1.0) for _ in range(n)]
    return make_track(track_id, centers, confs, video_id, start, label)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20_240_613)
