"""Tracking-by-detection engine: constant-velocity Kalman prediction plus
two-stage confidence-aware IoU association with an optimal assignment solver.

Association is IoU-only: on stationary underwater deployments at low sampling
rates, appearance features buy nothing over motion gating. A camera-motion
hook exists for completeness but defaults to a no-op.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .assignment import min_cost_assignment
from .core import BBox, Detection, Track, TrackStatus

XYXY = tuple[float, float, float, float]

TRACKED_FILE_HEADER = [
    "video_id", "frame_index", "time_ms", "track_id",
    "x1", "y1", "x2", "y2", "confidence", "label",
]


class FrameSequenceError(ValueError):
    """Raised when frames are fed to the tracker out of order."""


@dataclass(frozen=True, slots=True)
class TrackerConfig:
    """Association and lifecycle thresholds (the grid-search target).

    ``lost_buffer_frames`` defaults to 9 (3 s at the 3 FPS sampling default)
    rather than the 30 frames typical of pedestrian trackers, since sampled
    footage advances much more per frame.
    """

    high_conf_thresh: float = 0.5
    low_conf_floor: float = 0.2
    match_iou_stage1: float = 0.3
    match_iou_stage2: float = 0.5
    new_track_thresh: float = 0.6
    lost_buffer_frames: int = 9
    position_noise_scale: float = 1.0 / 20.0
    velocity_noise_scale: float = 1.0 / 160.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.low_conf_floor <= self.high_conf_thresh <= 1.0:
            raise ValueError(
                f"need 0 <= low_conf_floor ({self.low_conf_floor}) <= "
                f"high_conf_thresh ({self.high_conf_thresh}) <= 1"
            )
        for name in ("match_iou_stage1", "match_iou_stage2", "new_track_thresh"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")
        if self.lost_buffer_frames < 0:
            raise ValueError(f"lost_buffer_frames must be >= 0, got {self.lost_buffer_frames}")
        if self.position_noise_scale <= 0 or self.velocity_noise_scale <= 0:
            raise ValueError("noise scales must be positive")


@dataclass(frozen=True)
class KalmanState:
    """Motion state: mean (cx, cy, w, h, vcx, vcy, vw, vh), 8x8 covariance."""

    mean: np.ndarray
    covariance: np.ndarray


def state_xyxy(state: KalmanState) -> XYXY:
    """Corner coordinates of the state's box (may exceed the unit frame)."""
    cx, cy, w, h = state.mean[:4]
    return (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


class KalmanFilter:
    """Constant-velocity filter over (cx, cy, w, h).

    Process and measurement noise scale with box height, the SORT-family
    convention. The update uses the Joseph form so covariance stays
    symmetric PSD through long predict/update sequences.
    """

    def __init__(
        self,
        position_noise_scale: float = 1.0 / 20.0,
        velocity_noise_scale: float = 1.0 / 160.0,
    ):
        self._wp = position_noise_scale
        self._wv = velocity_noise_scale
        self._F = np.eye(8)
        for i in range(4):
            self._F[i, i + 4] = 1.0  # one frame per step
        self._H = np.eye(4, 8)

    def initiate(self, box: BBox) -> KalmanState:
        """State for a first detection: measured box, zero velocity."""
        cx, cy = box.center
        h = box.height
        mean = np.array([cx, cy, box.width, h, 0.0, 0.0, 0.0, 0.0])
        std = np.array([2 * self._wp * h] * 4 + [10 * self._wv * h] * 4)
        return KalmanState(mean=mean, covariance=np.diag(std**2))

    def predict(self, state: KalmanState) -> KalmanState:
        mean = self._F @ state.mean
        # Repeated prediction of a lost track must not collapse its box.
        mean[2] = max(mean[2], 1e-6)
        mean[3] = max(mean[3], 1e-6)
        h = mean[3]
        std = np.array([self._wp * h] * 4 + [self._wv * h] * 4)
        cov = self._F @ state.covariance @ self._F.T + np.diag(std**2)
        cov = (cov + cov.T) / 2
        return KalmanState(mean=mean, covariance=cov)

    def update(self, state: KalmanState, box: BBox) -> KalmanState:
        cx, cy = box.center
        z = np.array([cx, cy, box.width, box.height])
        h = state.mean[3]
        R = np.diag(np.array([self._wp * h] * 4) ** 2)
        S = self._H @ state.covariance @ self._H.T + R
        K = np.linalg.solve(S.T, (state.covariance @ self._H.T).T).T
        mean = state.mean + K @ (z - self._H @ state.mean)
        ikh = np.eye(8) - K @ self._H
        cov = ikh @ state.covariance @ ikh.T + K @ R @ K.T
        cov = (cov + cov.T) / 2
        return KalmanState(mean=mean, covariance=cov)


def iou_xyxy(a: XYXY, b: XYXY) -> float:
    """IoU on raw corner tuples (predicted boxes may leave the unit frame)."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass(frozen=True, slots=True)
class AssociationResult:
    matches: list[tuple[int, int]]  # (track index, detection index)
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def associate(
    predicted_boxes: Sequence[XYXY],
    detections: Sequence[Detection],
    cfg: TrackerConfig,
) -> AssociationResult:
    """Two-stage confidence-split association.

    Stage 1 assigns high-confidence detections to all tracks by minimizing
    total (1 - IoU), discarding assigned pairs under ``match_iou_stage1``.
    Stage 2 offers the low-confidence remainder (floor..high) to still-open
    tracks, gated at ``match_iou_stage2``. Detections under the floor match
    nothing.
    """
    stage1 = [i for i, d in enumerate(detections) if d.confidence >= cfg.high_conf_thresh]
    stage2 = [
        i for i, d in enumerate(detections)
        if cfg.low_conf_floor <= d.confidence < cfg.high_conf_thresh
    ]
    matches: list[tuple[int, int]] = []
    open_tracks = list(range(len(predicted_boxes)))

    for det_pool, gate in ((stage1, cfg.match_iou_stage1), (stage2, cfg.match_iou_stage2)):
        if not open_tracks or not det_pool:
            continue
        iou_mat = np.array(
            [
                [iou_xyxy(predicted_boxes[t], _det_xyxy(detections[d])) for d in det_pool]
                for t in open_tracks
            ]
        )
        for r, c in min_cost_assignment(1.0 - iou_mat):
            if iou_mat[r, c] >= gate:
                matches.append((open_tracks[r], det_pool[c]))
        matched_tracks = {t for t, _ in matches}
        open_tracks = [t for t in open_tracks if t not in matched_tracks]

    matches.sort()
    matched_dets = {d for _, d in matches}
    return AssociationResult(
        matches=matches,
        unmatched_tracks=open_tracks,
        unmatched_detections=[i for i in range(len(detections)) if i not in matched_dets],
    )


def _det_xyxy(d: Detection) -> XYXY:
    return (d.box.x1, d.box.y1, d.box.x2, d.box.y2)


@dataclass
class _LiveTrack:
    track_id: int
    state: KalmanState
    detections: list[Detection]
    status: TrackStatus
    misses: int = 0

    def to_track(self) -> Track:
        return Track(
            track_id=self.track_id,
            detections=tuple(self.detections),
            status=TrackStatus.FINISHED,
        )


class Tracker:
    """Sequential per-video tracking state: feed frames in order, then finish.

    Single-writer by design; run one instance per video.
    """

    def __init__(
        self,
        cfg: TrackerConfig | None = None,
        camera_motion: Callable[[int, list[XYXY]], list[XYXY]] | None = None,
    ):
        self.cfg = cfg or TrackerConfig()
        self._kf = KalmanFilter(self.cfg.position_noise_scale, self.cfg.velocity_noise_scale)
        self._live: list[_LiveTrack] = []  # active + lost, ascending track_id
        self._finished: list[_LiveTrack] = []
        self._next_id = 1
        self._last_frame: int | None = None
        self._camera_motion = camera_motion

    @property
    def active_tracks(self) -> list[int]:
        return [t.track_id for t in self._live if t.status is TrackStatus.ACTIVE]

    @property
    def lost_tracks(self) -> list[int]:
        return [t.track_id for t in self._live if t.status is TrackStatus.LOST]

    def step(self, frame_index: int, detections: Sequence[Detection]) -> list[int | None]:
        """Process one sampled frame; returns per-detection track assignment.

        Unassigned (discarded low-confidence) detections map to None.
        """
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise FrameSequenceError(
                f"frame {frame_index} not after last processed frame {self._last_frame}"
            )
        self._last_frame = frame_index

        for t in self._live:
            t.state = self._kf.predict(t.state)
        predicted = [state_xyxy(t.state) for t in self._live]
        if self._camera_motion is not None:
            predicted = self._camera_motion(frame_index, predicted)

        result = associate(predicted, detections, self.cfg)

        assignments: list[int | None] = [None] * len(detections)
        for ti, di in result.matches:
            track = self._live[ti]
            det = detections[di]
            track.state = self._kf.update(track.state, det.box)
            track.detections.append(det)
            track.status = TrackStatus.ACTIVE
            track.misses = 0
            assignments[di] = track.track_id

        expired: list[_LiveTrack] = []
        for ti in result.unmatched_tracks:
            track = self._live[ti]
            track.status = TrackStatus.LOST
            track.misses += 1
            if track.misses >= self.cfg.lost_buffer_frames:
                track.status = TrackStatus.FINISHED
                expired.append(track)
        if expired:
            gone = {t.track_id for t in expired}
            self._live = [t for t in self._live if t.track_id not in gone]
            self._finished.extend(expired)

        for di in result.unmatched_detections:
            det = detections[di]
            if det.confidence < self.cfg.new_track_thresh:
                continue
            live = _LiveTrack(
                track_id=self._next_id,
                state=self._kf.initiate(det.box),
                detections=[det],
                status=TrackStatus.ACTIVE,
            )
            self._next_id += 1
            self._live.append(live)
            assignments[di] = live.track_id

        return assignments

    def finish(self) -> list[Track]:
        """Close remaining tracks and return the whole run, ordered by id."""
        self._finished.extend(self._live)
        self._live = []
        out = sorted(self._finished, key=lambda t: t.track_id)
        return [t.to_track() for t in out]


def run(
    frames: Iterable[Sequence[Detection]], cfg: TrackerConfig | None = None
) -> list[Track]:
    """Track a whole video's per-frame detections; returns finished tracks.

    Deterministic: identical frames and config reproduce identical tracks.
    """
    tracker = Tracker(cfg)
    for frame_index, dets in enumerate(frames):
        tracker.step(frame_index, dets)
    return tracker.finish()


def write_tracked_csv(tracks: Iterable[Track], path: str | Path) -> None:
    """Serialize tracks to the tracked detection file (LF, 6-decimal reals).

    Rows ordered by (frame_index, track_id); the label column carries the
    track's species once reconciliation has run, empty before that.
    """
    rows = []
    for t in tracks:
        label = t.label or ""
        for d in t.detections:
            rows.append((d.frame_index, t.track_id, d, label))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(TRACKED_FILE_HEADER) + "\n")
        for frame_index, track_id, d, label in rows:
            b = d.box
            fh.write(
                f"{d.video_id},{frame_index},{d.time_ms},{track_id},"
                f"{b.x1:.6f},{b.y1:.6f},{b.x2:.6f},{b.y2:.6f},{d.confidence:.6f},{label}\n"
            )


def read_tracked_csv(path: str | Path) -> list[Track]:
    """Rebuild Track objects from a tracked detection file."""
    by_id: dict[int, list[Detection]] = {}
    labels: dict[int, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACKED_FILE_HEADER:
            raise ValueError(f"{path}: bad header {header!r}")
        for row in reader:
            if not row:
                continue
            video_id, frame_index, time_ms, track_id = row[0], int(row[1]), int(row[2]), int(row[3])
            x1, y1, x2, y2, conf = (float(v) for v in row[4:9])
            label = row[9]
            det = Detection(video_id, frame_index, time_ms, BBox(x1, y1, x2, y2), conf)
            by_id.setdefault(track_id, []).append(det)
            if label:
                labels[track_id] = label
    tracks = []
    for track_id in sorted(by_id):
        dets = sorted(by_id[track_id], key=lambda d: d.frame_index)
        tracks.append(
            Track(
                track_id=track_id,
                detections=tuple(dets),
                status=TrackStatus.FINISHED,
                label=labels.get(track_id),
            )
        )
    return tracks
