"""Human-in-the-loop stage: track image export, expert verdict collection,
label reconciliation, and species-specific MaxN.

Two interchangeable annotation paths exist: renaming/deleting the exported
image files, or the review service's annotation records. Both reduce to the
same :class:`Annotation` values and feed :func:`reconcile` identically.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .core import UNCLASSIFIED, Detection, Track, validate_species_label

logger = logging.getLogger(__name__)

_PLAIN_IMAGE_RE = re.compile(r"^(\d+)\.jpg$")
_LABELED_IMAGE_RE = re.compile(r"^(\d+)-([a-z0-9_]+)\.jpg$")


class Verdict(str, Enum):
    LABELED = "labeled"
    REJECTED = "rejected"


class UnknownTrackError(ValueError):
    """An annotation references a track id that does not exist in the run."""

    def __init__(self, ids: Sequence[tuple[str, int]]):
        self.ids = list(ids)
        pretty = ", ".join(f"{v}/{t}" for v, t in self.ids)
        super().__init__(f"annotations reference unknown tracks: {pretty}")


@dataclass(frozen=True, slots=True)
class Annotation:
    """One expert verdict on one track."""

    video_id: str
    track_id: int
    verdict: Verdict
    species: str | None = None

    def __post_init__(self) -> None:
        if self.verdict is Verdict.LABELED:
            if self.species is None:
                raise ValueError("labeled annotation requires a species")
            validate_species_label(self.species)
        elif self.species is not None:
            raise ValueError("rejected annotation cannot carry a species")


@dataclass(frozen=True, slots=True)
class MaxNRow:
    video_id: str
    species: str
    maxn: int
    frame_index_at_max: int
    time_ms_at_max: int


@dataclass(frozen=True, slots=True)
class MaxNReport:
    rows: tuple[MaxNRow, ...]

    HEADER = "video_id,species,maxn,frame_index_at_max,time_ms_at_max"

    def to_csv_text(self) -> str:
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(
                f"{r.video_id},{r.species},{r.maxn},{r.frame_index_at_max},{r.time_ms_at_max}"
            )
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8", newline="\n")


def read_maxn_report(path: str | Path) -> MaxNReport:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MaxNReport.HEADER:
        raise ValueError(f"{path}: not a MaxN report file")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        video_id, species, maxn, frame_index, time_ms = line.split(",")
        rows.append(MaxNRow(video_id, species, int(maxn), int(frame_index), int(time_ms)))
    return MaxNReport(rows=tuple(rows))


class FrameStore(Protocol):
    """Source of raster frames for image export.

    Returns an (H, W, 3) uint8 RGB array, or None when the frame raster is
    unavailable (the track is then skipped with a warning and stays
    annotatable through the review service).
    """

    def get_frame(self, video_id: str, frame_index: int) -> np.ndarray | None: ...


class SolidFrameStore:
    """Uniform-color frames; stands in for footage on synthetic runs."""

    def __init__(self, width_px: int, height_px: int, color: tuple[int, int, int] = (20, 60, 90)):
        self._frame = np.full((height_px, width_px, 3), color, dtype=np.uint8)

    def get_frame(self, video_id, frame_index):
        return self._frame.copy()


class DirectoryFrameStore:
    """Pre-extracted frame rasters: <root>/<video_id>/frame_<index>.<ext>."""

    EXTENSIONS = (".png", ".jpg", ".jpeg", ".ppm")

    def __init__(self, root: str | Path):
        self._root = Path(root)

    def get_frame(self, video_id, frame_index):
        for ext in self.EXTENSIONS:
            path = self._root / video_id / f"frame_{frame_index:06d}{ext}"
            if path.exists():
                return np.asarray(Image.open(path).convert("RGB"))
        return None


def representative_detection(track: Track) -> Detection:
    """The max-confidence detection; earliest frame wins confidence ties."""
    best = track.detections[0]
    for d in track.detections[1:]:
        if d.confidence > best.confidence:
            best = d
    return best


def export_track_images(
    tracks: Iterable[Track],
    frame_store: FrameStore,
    out_root: str | Path,
) -> dict[str, list[int]]:
    """Write one annotatable image per track under <out_root>/<video_id>/.

    Each image is the full sampled frame of the track's representative
    detection with that detection's box drawn. Returns the track ids whose
    image was actually written, keyed by video.
    """
    out_root = Path(out_root)
    written: dict[str, list[int]] = {}
    for track in tracks:
        det = representative_detection(track)
        frame = frame_store.get_frame(track.video_id, det.frame_index)
        if frame is None:
            logger.warning(
                "no frame raster for %s frame %d; skipping image for track %d",
                track.video_id, det.frame_index, track.track_id,
            )
            continue
        img = Image.fromarray(frame)
        draw = ImageDraw.Draw(img)
        w, h = img.size
        draw.rectangle(
            (det.box.x1 * w, det.box.y1 * h, det.box.x2 * w, det.box.y2 * h),
            outline=(255, 40, 40),
            width=max(2, round(min(w, h) / 250)),
        )
        video_dir = out_root / track.video_id
        video_dir.mkdir(parents=True, exist_ok=True)
        img.save(video_dir / f"{track.track_id}.jpg", quality=90)
        written.setdefault(track.video_id, []).append(track.track_id)
    return written


def collect_filesystem_annotations(
    tracks_root: str | Path,
    exported: Mapping[str, Sequence[int]],
) -> list[Annotation]:
    """Read expert verdicts back from the exported image directory.

    For each exported track id: ``<id>-<species>.jpg`` means labeled, a
    deleted file means rejected, and an untouched ``<id>.jpg`` means no
    verdict yet. Files with unrecognized names are skipped with a warning;
    two surviving files for the same id are ambiguous and raise ValueError.
    """
    tracks_root = Path(tracks_root)
    annotations: list[Annotation] = []
    for video_id in sorted(exported):
        expected = set(exported[video_id])
        video_dir = tracks_root / video_id
        seen: dict[int, tuple[str, str | None]] = {}  # id -> (filename, species)
        if video_dir.is_dir():
            for path in sorted(video_dir.iterdir()):
                name = path.name
                if m := _PLAIN_IMAGE_RE.match(name):
                    track_id, species = int(m.group(1)), None
                elif m := _LABELED_IMAGE_RE.match(name):
                    track_id, species = int(m.group(1)), m.group(2)
                else:
                    logger.warning("ignoring unrecognized file in %s: %s", video_dir, name)
                    continue
                if track_id not in expected:
                    logger.warning(
                        "ignoring file for unknown track id %d in %s: %s",
                        track_id, video_dir, name,
                    )
                    continue
                if track_id in seen:
                    raise ValueError(
                        f"conflicting files for track {track_id} in {video_dir}: "
                        f"{seen[track_id][0]} and {name}"
                    )
                seen[track_id] = (name, species)
        for track_id in sorted(expected):
            if track_id not in seen:
                annotations.append(Annotation(video_id, track_id, Verdict.REJECTED))
            elif (species := seen[track_id][1]) is not None:
                annotations.append(Annotation(video_id, track_id, Verdict.LABELED, species))
            # untouched file: no verdict yet
    return annotations


def reconcile(tracks: Sequence[Track], annotations: Iterable[Annotation]) -> list[Track]:
    """Fold expert verdicts onto tracks.

    Labeled tracks carry the species (on every detection, via the track);
    rejected tracks are dropped entirely; everything else gets the
    ``unclassified`` pseudo-label so incomplete review stays visible.
    Later annotations for the same track override earlier ones.

    Rejected verdicts for ids no longer present are no-ops, which makes
    repeated application with the same annotation set idempotent; a labeled
    verdict for an unknown id is always an error.
    """
    known = {(t.video_id, t.track_id) for t in tracks}
    final: dict[tuple[str, int], Annotation] = {}
    unknown: list[tuple[str, int]] = []
    for ann in annotations:
        key = (ann.video_id, ann.track_id)
        if key not in known:
            if ann.verdict is Verdict.LABELED:
                unknown.append(key)
            continue
        final[key] = ann
    if unknown:
        raise UnknownTrackError(sorted(set(unknown)))

    out: list[Track] = []
    for t in tracks:
        ann = final.get((t.video_id, t.track_id))
        if ann is None:
            out.append(t.with_label(UNCLASSIFIED))
        elif ann.verdict is Verdict.REJECTED:
            continue
        else:
            out.append(t.with_label(ann.species))
    return out


def compute_ssmaxn(tracks: Iterable[Track]) -> MaxNReport:
    """Species-specific MaxN over sampled frames.

    For each (video, species), counts that species' detections per sampled
    frame and reports the maximum with the earliest frame attaining it.
    Only species that actually occur are reported, so every row has
    maxn >= 1; unreviewed tracks show up as the ``unclassified`` row.
    """
    counts: dict[tuple[str, str], dict[int, int]] = {}
    times: dict[tuple[str, int], int] = {}
    for t in tracks:
        if t.rejected:
            continue
        species = t.label or UNCLASSIFIED
        key = (t.video_id, species)
        per_frame = counts.setdefault(key, {})
        for d in t.detections:
            per_frame[d.frame_index] = per_frame.get(d.frame_index, 0) + 1
            times[(t.video_id, d.frame_index)] = d.time_ms

    rows = []
    for (video_id, species) in sorted(counts):
        per_frame = counts[(video_id, species)]
        maxn = max(per_frame.values())
        frame_at = min(f for f, n in per_frame.items() if n == maxn)
        rows.append(MaxNRow(video_id, species, maxn, frame_at, times[(video_id, frame_at)]))
    return MaxNReport(rows=tuple(rows))
