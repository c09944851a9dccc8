"""Frame sampling schedules and per-frame detection streams.

Three sources produce the detection stream: a reference detection file, a
scripted synthetic scenario (the desk-scale test oracle), or any external
detector plugged in through :class:`DetectorBackend`.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import yaml

from .core import BBox, Detection, Track, TrackStatus, VideoMeta, validate_species_label

#: Sampling rate giving the best tracking-accuracy / inference-speed tradeoff.
DEFAULT_SAMPLING_FPS = 3.0

#: Detections below this confidence are dropped at ingestion.
DEFAULT_CONF_THRESHOLD = 0.2

DETECTION_FILE_HEADER = ["frame_index", "time_ms", "x1", "y1", "x2", "y2", "confidence"]


class DetectionFileError(ValueError):
    """Raised for malformed or invalid detection file content."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _round_half_away(x: float) -> int:
    # Nearest integer, ties away from zero; x is never negative here.
    # (Python's round() is banker's rounding, which would break .5 ties.)
    return math.floor(x + 0.5)


@dataclass(frozen=True, slots=True)
class SamplingSchedule:
    """The (frame_index, time_ms) grid a video is sampled on."""

    video: VideoMeta
    fps: float
    frames: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        for k, (idx, _) in enumerate(self.frames):
            if idx != k:
                raise ValueError("frame indices must be consecutive from 0")
        times = [t for _, t in self.frames]
        if any(a >= b for a, b in zip(times, times[1:])):
            raise ValueError("frame times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    def time_ms_of(self, frame_index: int) -> int:
        return self.frames[frame_index][1]


def build_schedule(video: VideoMeta, fps: float = DEFAULT_SAMPLING_FPS) -> SamplingSchedule:
    """Sample times i/fps for i = 0, 1, ... strictly inside the video duration.

    The interval is half-open so a video whose duration is an exact multiple
    of the sampling period gets no phantom frame at its very end.
    """
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    frames = []
    i = 0
    # Compare i * 1000 < duration * fps instead of i * 1000 / fps < duration:
    # products stay exact for the integer-valued cases the boundary cares about.
    while i * 1000.0 < video.duration_ms * fps:
        frames.append((i, _round_half_away(i * 1000.0 / fps)))
        i += 1
    return SamplingSchedule(video=video, fps=fps, frames=tuple(frames))


class DetectorBackend(Protocol):
    """Anything that yields (box, confidence) pairs for a sampled frame.

    Implementations must be deterministic for a fixed instance and input so
    that pipeline runs are reproducible.
    """

    def detect(
        self, video_id: str, frame_index: int, time_ms: int
    ) -> list[tuple[BBox, float]]: ...


class PrecomputedBackend:
    """Backend view over already-materialized per-frame detections."""

    def __init__(self, frames: list[list[Detection]]):
        self._frames = frames

    def detect(self, video_id, frame_index, time_ms):
        if not 0 <= frame_index < len(self._frames):
            return []
        return [(d.box, d.confidence) for d in self._frames[frame_index]]


def run_backend(
    backend: DetectorBackend,
    schedule: SamplingSchedule,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
) -> list[list[Detection]]:
    """Drive a detector backend over a schedule, applying the confidence floor."""
    video_id = schedule.video.video_id
    out: list[list[Detection]] = []
    for frame_index, time_ms in schedule.frames:
        dets = [
            Detection(video_id, frame_index, time_ms, box, conf)
            for box, conf in backend.detect(video_id, frame_index, time_ms)
            if conf >= conf_threshold
        ]
        out.append(dets)
    return out


def load_detection_file(
    path: str | Path,
    schedule: SamplingSchedule,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
) -> list[list[Detection]]:
    """Parse a reference detection file into per-frame detection lists.

    Rows under ``conf_threshold`` are dropped; remaining rows are grouped by
    frame index (one possibly-empty list per scheduled frame, row order
    preserved). Any malformed or out-of-range row raises
    :class:`DetectionFileError` naming its line number.
    """
    frames: list[list[Detection]] = [[] for _ in schedule.frames]
    video_id = schedule.video.video_id
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DetectionFileError(1, "missing header row") from None
        if header != DETECTION_FILE_HEADER:
            raise DetectionFileError(
                1, f"bad header {header!r}, expected {DETECTION_FILE_HEADER!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise DetectionFileError(lineno, f"expected 7 fields, got {len(row)}")
            try:
                frame_index = int(row[0])
                time_ms = int(row[1])
                x1, y1, x2, y2, conf = (float(v) for v in row[2:])
            except ValueError as exc:
                raise DetectionFileError(lineno, f"unparsable field: {exc}") from None
            if not 0 <= frame_index < len(schedule.frames):
                raise DetectionFileError(
                    lineno,
                    f"frame_index {frame_index} outside schedule [0, {len(schedule.frames)})",
                )
            try:
                det = Detection(video_id, frame_index, time_ms, BBox(x1, y1, x2, y2), conf)
            except ValueError as exc:
                raise DetectionFileError(lineno, str(exc)) from None
            if det.confidence < conf_threshold:
                continue
            frames[frame_index].append(det)
    return frames


def write_detection_file(frames: Iterable[Iterable[Detection]], path: str | Path) -> None:
    """Serialize per-frame detections back to the reference file format.

    Coordinates and confidence are written with exactly 6 decimal digits, so
    load -> write round-trips surviving rows bit-exactly.
    """
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(DETECTION_FILE_HEADER) + "\n")
        for dets in frames:
            for d in dets:
                b = d.box
                fh.write(
                    f"{d.frame_index},{d.time_ms},{b.x1:.6f},{b.y1:.6f},"
                    f"{b.x2:.6f},{b.y2:.6f},{d.confidence:.6f}\n"
                )


@dataclass(frozen=True, slots=True)
class ScriptedActor:
    """A scripted animal: constant-velocity box with a species identity.

    ``gaps`` are [start_ms, end_ms) windows where the actor is occluded and
    emits no detection (and contributes no ground truth).
    """

    species: str
    entry_ms: int
    exit_ms: int
    cx: float
    cy: float
    vx: float = 0.0  # normalized units per second
    vy: float = 0.0
    width: float = 0.1
    height: float = 0.1
    confidence: float = 0.9
    gaps: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        validate_species_label(self.species)
        if self.entry_ms >= self.exit_ms:
            raise ValueError(f"actor entry {self.entry_ms} must precede exit {self.exit_ms}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        for t in (self.entry_ms, self.exit_ms):
            if not self._inside_at(t):
                raise ValueError(
                    f"actor {self.species} leaves the unit frame at t={t} ms"
                )
        for start, end in self.gaps:
            if not self.entry_ms <= start < end <= self.exit_ms:
                raise ValueError(f"gap ({start}, {end}) outside actor lifetime")

    def _inside_at(self, time_ms: int) -> bool:
        cx, cy = self.center_at(time_ms)
        return (
            cx - self.width / 2 >= 0.0
            and cx + self.width / 2 <= 1.0
            and cy - self.height / 2 >= 0.0
            and cy + self.height / 2 <= 1.0
        )

    def center_at(self, time_ms: int) -> tuple[float, float]:
        dt_s = (time_ms - self.entry_ms) / 1000.0
        return (self.cx + self.vx * dt_s, self.cy + self.vy * dt_s)

    def box_at(self, time_ms: int) -> BBox:
        cx, cy = self.center_at(time_ms)
        return BBox(
            cx - self.width / 2, cy - self.height / 2, cx + self.width / 2, cy + self.height / 2
        )

    def emits_at(self, time_ms: int) -> bool:
        if not self.entry_ms <= time_ms < self.exit_ms:
            return False
        return not any(start <= time_ms < end for start, end in self.gaps)


@dataclass(frozen=True, slots=True)
class ClutterEmitter:
    """A scripted false-positive source (algae, debris, fixed structure).

    ``jitter`` is the per-frame Gaussian wobble of the center; ``detect_prob``
    makes flickering emitters possible. Both draws come from the seeded
    scenario RNG, keeping runs reproducible.
    """

    cx: float
    cy: float
    width: float = 0.05
    height: float = 0.05
    confidence: float = 0.4
    jitter: float = 0.0
    detect_prob: float = 1.0
    entry_ms: int = 0
    exit_ms: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not 0.0 <= self.detect_prob <= 1.0:
            raise ValueError(f"detect_prob {self.detect_prob} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class ScenarioSpec:
    """Fully scripted scene: actors are ground truth, clutter is noise."""

    video: VideoMeta
    actors: tuple[ScriptedActor, ...] = ()
    clutter: tuple[ClutterEmitter, ...] = ()


@dataclass(frozen=True, slots=True)
class SyntheticResult:
    frames: list[list[Detection]]
    gt_tracks: list[Track]
    gt_maxn: dict[str, int]


def synthesize(spec: ScenarioSpec, schedule: SamplingSchedule, seed: int = 0) -> SyntheticResult:
    """Materialize a scripted scenario on a sampling schedule.

    Deterministic for a fixed seed. Ground-truth tracks follow the actor
    scripts exactly; ground-truth ssMaxN is a brute-force per-frame count of
    emitting actors per species.
    """
    rng = random.Random(seed)
    video_id = spec.video.video_id
    frames: list[list[Detection]] = []
    actor_detections: list[list[Detection]] = [[] for _ in spec.actors]
    per_frame_species: list[dict[str, int]] = []

    for frame_index, time_ms in schedule.frames:
        dets: list[Detection] = []
        species_counts: dict[str, int] = {}
        for ai, actor in enumerate(spec.actors):
            if not actor.emits_at(time_ms):
                continue
            det = Detection(
                video_id, frame_index, time_ms, actor.box_at(time_ms), actor.confidence
            )
            dets.append(det)
            actor_detections[ai].append(det)
            species_counts[actor.species] = species_counts.get(actor.species, 0) + 1
        for emitter in spec.clutter:
            exit_ms = emitter.exit_ms if emitter.exit_ms is not None else spec.video.duration_ms
            if not emitter.entry_ms <= time_ms < exit_ms:
                continue
            if emitter.detect_prob < 1.0 and rng.random() >= emitter.detect_prob:
                continue
            cx = emitter.cx + (rng.gauss(0.0, emitter.jitter) if emitter.jitter > 0 else 0.0)
            cy = emitter.cy + (rng.gauss(0.0, emitter.jitter) if emitter.jitter > 0 else 0.0)
            # Clamp so jitter cannot push the box out of the unit frame.
            cx = min(max(cx, emitter.width / 2), 1.0 - emitter.width / 2)
            cy = min(max(cy, emitter.height / 2), 1.0 - emitter.height / 2)
            box = BBox(
                cx - emitter.width / 2,
                cy - emitter.height / 2,
                cx + emitter.width / 2,
                cy + emitter.height / 2,
            )
            dets.append(Detection(video_id, frame_index, time_ms, box, emitter.confidence))
        frames.append(dets)
        per_frame_species.append(species_counts)

    gt_tracks = [
        Track(
            track_id=ai + 1,
            detections=tuple(dets),
            status=TrackStatus.FINISHED,
            label=spec.actors[ai].species,
        )
        for ai, dets in enumerate(actor_detections)
        if dets
    ]

    gt_maxn: dict[str, int] = {}
    for counts in per_frame_species:
        for species, n in counts.items():
            gt_maxn[species] = max(gt_maxn.get(species, 0), n)

    return SyntheticResult(frames=frames, gt_tracks=gt_tracks, gt_maxn=gt_maxn)


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Read a scenario description from its YAML file.

    Schema (all coordinates normalized, times in milliseconds)::

        video: {video_id, duration_ms, frame_width_px, frame_height_px}
        actors:
          - {species, entry_ms, exit_ms, cx, cy, vx, vy, width, height,
             confidence, gaps: [[start_ms, end_ms], ...]}
        clutter:
          - {cx, cy, width, height, confidence, jitter, detect_prob,
             entry_ms, exit_ms}
    """
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    try:
        video = VideoMeta(**raw["video"])
        actors = tuple(
            ScriptedActor(**{**a, "gaps": tuple(tuple(g) for g in a.get("gaps", []))})
            for a in raw.get("actors", [])
        )
        clutter = tuple(ClutterEmitter(**c) for c in raw.get("clutter", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid scenario file {path}: {exc}") from exc
    return ScenarioSpec(video=video, actors=actors, clutter=clutter)
