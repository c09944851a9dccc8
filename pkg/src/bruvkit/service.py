"""Run-directory orchestration and the review HTTP API.

A run directory is the unit of persistence (no database, field-laptop
friendly): tracked detections, kept/removed summaries, exported track
images, an append-only annotation log, and the final MaxN report all live
under one directory described by ``manifest.json``.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import analysis, ingest, postfilter, tracker
from .analysis import (
    Annotation,
    FrameStore,
    MaxNReport,
    SolidFrameStore,
    Verdict,
    collect_filesystem_annotations,
    compute_ssmaxn,
    reconcile,
)
from .core import Track, VideoMeta, validate_species_label
from .ingest import ScenarioSpec, build_schedule
from .postfilter import PostFilterConfig
from .tracker import TrackerConfig

STAGES = ("detected", "tracked", "filtered", "exported", "reconciled", "maxn")

SUMMARY_HEADER = (
    "track_id,disposition,n_detections,first_frame,last_frame,span_s,"
    "max_confidence,displacement"
)


class AnnotationConflictError(ValueError):
    """Filesystem renames and the annotation store disagree on a track."""

    def __init__(self, ids: list[tuple[str, int]]):
        self.ids = ids
        pretty = ", ".join(f"{v}/{t}" for v, t in ids)
        super().__init__(
            f"conflicting filesystem and service verdicts for tracks: {pretty}; "
            "resolve manually before finalizing"
        )


# ---------------------------------------------------------------------------
# Inputs


@dataclass(frozen=True, slots=True)
class ScenarioSource:
    """Synthetic video: detections scripted by a scenario."""

    spec: ScenarioSpec
    seed: int = 0

    @property
    def meta(self) -> VideoMeta:
        return self.spec.video


@dataclass(frozen=True, slots=True)
class DetectionFileSource:
    """Reference-backend video: detections parsed from a file."""

    path: Path
    meta: VideoMeta


VideoSource = ScenarioSource | DetectionFileSource


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class VideoRun:
    meta: VideoMeta
    fps: float
    conf_threshold: float
    tracker_config: TrackerConfig
    postfilter_config: PostFilterConfig
    stages: dict[str, bool] = field(default_factory=lambda: {s: False for s in STAGES})
    kept_tracks: list[int] = field(default_factory=list)
    removed_tracks: list[int] = field(default_factory=list)
    exported_images: list[int] = field(default_factory=list)


@dataclass
class RunManifest:
    run_id: str
    videos: dict[str, VideoRun] = field(default_factory=dict)

    def save(self, run_dir: Path) -> None:
        payload = {
            "run_id": self.run_id,
            "videos": {
                vid: {
                    "meta": asdict(vr.meta),
                    "fps": vr.fps,
                    "conf_threshold": vr.conf_threshold,
                    "tracker_config": asdict(vr.tracker_config),
                    "postfilter_config": asdict(vr.postfilter_config),
                    "stages": vr.stages,
                    "kept_tracks": vr.kept_tracks,
                    "removed_tracks": vr.removed_tracks,
                    "exported_images": vr.exported_images,
                }
                for vid, vr in self.videos.items()
            },
        }
        (run_dir / "manifest.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest":
        path = Path(run_dir) / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"{run_dir} is not a run directory (no manifest.json)")
        payload = json.loads(path.read_text(encoding="utf-8"))
        videos = {
            vid: VideoRun(
                meta=VideoMeta(**raw["meta"]),
                fps=raw["fps"],
                conf_threshold=raw["conf_threshold"],
                tracker_config=TrackerConfig(**raw["tracker_config"]),
                postfilter_config=PostFilterConfig(**raw["postfilter_config"]),
                stages=dict(raw["stages"]),
                kept_tracks=list(raw["kept_tracks"]),
                removed_tracks=list(raw["removed_tracks"]),
                exported_images=list(raw["exported_images"]),
            )
            for vid, raw in payload["videos"].items()
        }
        return cls(run_id=payload["run_id"], videos=videos)


# ---------------------------------------------------------------------------
# Annotation store


class AnnotationStore:
    """Append-only verdict log; the audit trail of expert decisions.

    Records are flushed and fsynced before an append returns, so an
    acknowledged verdict survives a crash. The effective state is the fold
    of the log in (timestamp, arrival) order: last write wins.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()

    def append(self, ann: Annotation, ts: float | None = None) -> dict:
        record = {
            "ts": time.time() if ts is None else ts,
            "video_id": ann.video_id,
            "track_id": ann.track_id,
            "verdict": ann.verdict.value,
        }
        if ann.species is not None:
            record["species"] = ann.species
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        return record

    def records(self) -> list[dict]:
        if not self._path.exists():
            return []
        out = []
        with open(self._path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def latest(self) -> dict[tuple[str, int], Annotation]:
        """Materialized latest-verdict view per track."""
        view: dict[tuple[str, int], Annotation] = {}
        records = sorted(enumerate(self.records()), key=lambda r: (r[1]["ts"], r[0]))
        for _, rec in records:
            ann = Annotation(
                video_id=rec["video_id"],
                track_id=int(rec["track_id"]),
                verdict=Verdict(rec["verdict"]),
                species=rec.get("species"),
            )
            view[(ann.video_id, ann.track_id)] = ann
        return view


# ---------------------------------------------------------------------------
# Pipeline commands


def analyze(
    run_dir: str | Path,
    sources: list[VideoSource],
    fps: float = ingest.DEFAULT_SAMPLING_FPS,
    conf_threshold: float = ingest.DEFAULT_CONF_THRESHOLD,
    tracker_config: TrackerConfig | None = None,
    postfilter_config: PostFilterConfig | None = None,
    frame_store: FrameStore | None = None,
    resume: bool = False,
) -> RunManifest:
    """Detect/load, track, filter, and export a run directory.

    ``run_dir`` must be empty or absent, unless ``resume`` is set: then a
    partial run is picked up from its manifest and videos whose export stage
    already completed are left untouched (their config snapshot included).
    The manifest is flushed after every video, so a crash loses at most the
    video in flight.

    Synthetic sources get a solid-color frame store automatically so their
    tracks are image-annotatable; file sources need an explicit
    ``frame_store`` for image export (without one their tracks are
    annotatable through the review service only).
    """
    run_dir = Path(run_dir)
    if run_dir.exists() and any(run_dir.iterdir()):
        if not resume:
            raise ValueError(f"run directory {run_dir} exists and is not empty")
        manifest = RunManifest.load(run_dir)
    else:
        manifest = RunManifest(run_id=run_dir.name)
    tracker_config = tracker_config or TrackerConfig()
    postfilter_config = postfilter_config or PostFilterConfig()

    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "tracked").mkdir(exist_ok=True)
    (run_dir / "summary").mkdir(exist_ok=True)

    seen: set[str] = set()
    for source in sources:
        meta = source.meta
        if meta.video_id in seen:
            raise ValueError(f"duplicate video id {meta.video_id!r}")
        seen.add(meta.video_id)
        done = manifest.videos.get(meta.video_id)
        if done is not None and done.stages.get("exported"):
            continue
        schedule = build_schedule(meta, fps)
        video_run = VideoRun(
            meta=meta,
            fps=fps,
            conf_threshold=conf_threshold,
            tracker_config=tracker_config,
            postfilter_config=postfilter_config,
        )

        if isinstance(source, ScenarioSource):
            synthetic = ingest.synthesize(source.spec, schedule, source.seed)
            frames = [
                [d for d in dets if d.confidence >= conf_threshold]
                for dets in synthetic.frames
            ]
            _write_ground_truth(run_dir, meta.video_id, synthetic)
            store: FrameStore | None = frame_store or SolidFrameStore(
                meta.frame_width_px, meta.frame_height_px
            )
        else:
            frames = ingest.load_detection_file(source.path, schedule, conf_threshold)
            store = frame_store
        video_run.stages["detected"] = True

        tracks = tracker.run(frames, tracker_config)
        video_run.stages["tracked"] = True

        kept, removed = postfilter.apply(tracks, postfilter_config)
        video_run.kept_tracks = [t.track_id for t in kept]
        video_run.removed_tracks = [t.track_id for t in removed]
        video_run.stages["filtered"] = True

        tracker.write_tracked_csv(kept, run_dir / "tracked" / f"{meta.video_id}.csv")
        _write_summary(run_dir, meta.video_id, kept, removed)

        if store is not None and kept:
            written = analysis.export_track_images(kept, store, run_dir / "tracks")
            video_run.exported_images = written.get(meta.video_id, [])
        video_run.stages["exported"] = True

        manifest.videos[meta.video_id] = video_run
        manifest.save(run_dir)  # flush progress per video; crashes stay resumable

    manifest.save(run_dir)
    return manifest


def _write_ground_truth(run_dir: Path, video_id: str, synthetic: ingest.SyntheticResult) -> None:
    gt_dir = run_dir / "gt"
    gt_dir.mkdir(exist_ok=True)
    tracker.write_tracked_csv(synthetic.gt_tracks, gt_dir / f"{video_id}_tracks.csv")
    with open(gt_dir / f"{video_id}_maxn.csv", "w", newline="\n", encoding="utf-8") as fh:
        fh.write("video_id,species,maxn\n")
        for species in sorted(synthetic.gt_maxn):
            fh.write(f"{video_id},{species},{synthetic.gt_maxn[species]}\n")


def _write_summary(run_dir: Path, video_id: str, kept: list[Track], removed: list[Track]) -> None:
    from .core import track_max_center_displacement, track_span_s

    rows = [(t, "kept") for t in kept] + [(t, "removed") for t in removed]
    rows.sort(key=lambda r: r[0].track_id)
    with open(run_dir / "summary" / f"{video_id}.csv", "w", newline="\n", encoding="utf-8") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for t, disposition in rows:
            fh.write(
                f"{t.track_id},{disposition},{len(t.detections)},"
                f"{t.detections[0].frame_index},{t.detections[-1].frame_index},"
                f"{track_span_s(t):.3f},{t.max_confidence:.6f},"
                f"{track_max_center_displacement(t):.6f}\n"
            )


def load_kept_tracks(run_dir: str | Path, manifest: RunManifest) -> list[Track]:
    tracks: list[Track] = []
    for video_id in sorted(manifest.videos):
        path = Path(run_dir) / "tracked" / f"{video_id}.csv"
        if path.exists():
            tracks.extend(tracker.read_tracked_csv(path))
    return tracks


def merged_annotations(run_dir: str | Path, manifest: RunManifest) -> list[Annotation]:
    """Union of filesystem-rename and annotation-store verdicts.

    A track with verdicts from both paths must agree exactly; disagreement
    raises :class:`AnnotationConflictError` because expert classification
    must never be merged ambiguously.
    """
    run_dir = Path(run_dir)
    exported = {vid: vr.exported_images for vid, vr in manifest.videos.items()}
    fs_annotations = {
        (a.video_id, a.track_id): a
        for a in collect_filesystem_annotations(run_dir / "tracks", exported)
    }
    store_view = AnnotationStore(run_dir / "annotations.jsonl").latest()

    conflicts = [
        key
        for key, fs_ann in fs_annotations.items()
        if key in store_view and store_view[key] != fs_ann
    ]
    if conflicts:
        raise AnnotationConflictError(sorted(conflicts))

    merged = dict(fs_annotations)
    merged.update(store_view)
    return [merged[k] for k in sorted(merged)]


def finalize(run_dir: str | Path) -> MaxNReport:
    """Reconcile all collected verdicts and write the MaxN report.

    Idempotent: rerunning without new verdicts rewrites an identical file.
    """
    run_dir = Path(run_dir)
    manifest = RunManifest.load(run_dir)
    for vid, vr in manifest.videos.items():
        if not vr.stages.get("exported"):
            raise ValueError(f"video {vid} has not completed the export stage")

    kept = load_kept_tracks(run_dir, manifest)
    annotations = merged_annotations(run_dir, manifest)
    labeled = reconcile(kept, annotations)
    report = compute_ssmaxn(labeled)
    report.write(run_dir / "maxn.csv")

    for vr in manifest.videos.values():
        vr.stages["reconciled"] = True
        vr.stages["maxn"] = True
    manifest.save(run_dir)
    return report


# ---------------------------------------------------------------------------
# HTTP API


def create_app(
    run_dir: str | Path,
    ui_dir: str | Path | None = None,
    species_file: str | Path | None = None,
):
    """Build the review API over a run directory.

    Reads are concurrent; verdict writes go through the store's lock and are
    durable before the response is sent (ack-then-render on the client).
    """
    run_dir = Path(run_dir)
    manifest = RunManifest.load(run_dir)
    for vid, vr in manifest.videos.items():
        if not vr.stages.get("exported"):
            raise ValueError(f"video {vid} has not completed the export stage")
    store = AnnotationStore(run_dir / "annotations.jsonl")
    tracks_by_video: dict[str, dict[int, Track]] = {}
    for vid in manifest.videos:
        path = run_dir / "tracked" / f"{vid}.csv"
        tracks = tracker.read_tracked_csv(path) if path.exists() else []
        tracks_by_video[vid] = {t.track_id: t for t in tracks}

    if species_file is None and (run_dir / "species.txt").exists():
        species_file = run_dir / "species.txt"

    app = FastAPI(title="bruvkit review service")

    def current_verdicts() -> dict[tuple[str, int], Annotation]:
        return {(a.video_id, a.track_id): a for a in merged_annotations(run_dir, manifest)}

    @app.get("/api/videos")
    def list_videos():
        verdicts = current_verdicts()
        out = []
        for vid in sorted(manifest.videos):
            total = len(tracks_by_video[vid])
            reviewed = sum(1 for (v, _t) in verdicts if v == vid)
            out.append({"video_id": vid, "track_count": total, "reviewed": reviewed})
        return out

    @app.get("/api/videos/{video_id}/tracks")
    def list_tracks(video_id: str):
        if video_id not in tracks_by_video:
            return JSONResponse({"error": f"unknown video {video_id!r}"}, status_code=404)
        verdicts = current_verdicts()
        from .core import track_span_s

        out = []
        for track_id in sorted(tracks_by_video[video_id]):
            t = tracks_by_video[video_id][track_id]
            ann = verdicts.get((video_id, track_id))
            out.append(
                {
                    "video_id": video_id,
                    "track_id": track_id,
                    "span_s": round(track_span_s(t), 3),
                    "max_confidence": round(t.max_confidence, 6),
                    "verdict": None if ann is None else ann.verdict.value,
                    "species": None if ann is None else ann.species,
                    "image_url": f"/api/tracks/{video_id}/{track_id}/image",
                }
            )
        return out

    @app.get("/api/tracks/{video_id}/{track_id}/image")
    def track_image(video_id: str, track_id: int):
        if video_id not in tracks_by_video or track_id not in tracks_by_video[video_id]:
            return JSONResponse({"error": "unknown track"}, status_code=404)
        path = run_dir / "tracks" / video_id / f"{track_id}.jpg"
        if not path.exists():
            return JSONResponse({"error": "no image exported for this track"}, status_code=404)
        return FileResponse(path, media_type="image/jpeg")

    @app.put("/api/tracks/{video_id}/{track_id}/annotation")
    async def put_annotation(video_id: str, track_id: int, request: Request):
        if video_id not in tracks_by_video or track_id not in tracks_by_video[video_id]:
            return JSONResponse({"error": "unknown track"}, status_code=404)
        try:
            payload = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            return JSONResponse({"error": f"body is not valid JSON: {exc}"}, status_code=400)
        if not isinstance(payload, dict):
            return JSONResponse({"error": "body must be a JSON object"}, status_code=400)
        verdict = payload.get("verdict")
        species = payload.get("species")
        if verdict not in (Verdict.LABELED.value, Verdict.REJECTED.value):
            return JSONResponse(
                {"error": "field 'verdict' must be 'labeled' or 'rejected'"}, status_code=400
            )
        if verdict == Verdict.REJECTED.value and species is not None:
            return JSONResponse(
                {"error": "field 'species' not allowed for a rejected verdict"}, status_code=400
            )
        if verdict == Verdict.LABELED.value:
            if not isinstance(species, str):
                return JSONResponse(
                    {"error": "field 'species' (string) required for a labeled verdict"},
                    status_code=400,
                )
            try:
                validate_species_label(species)
            except ValueError as exc:
                return JSONResponse({"error": str(exc)}, status_code=422)
        ann = Annotation(
            video_id=video_id,
            track_id=track_id,
            verdict=Verdict(verdict),
            species=species if verdict == Verdict.LABELED.value else None,
        )
        record = store.append(ann)  # durable before the 200 goes out
        return {
            "video_id": video_id,
            "track_id": track_id,
            "verdict": record["verdict"],
            "species": record.get("species"),
        }

    @app.get("/api/videos/{video_id}/maxn")
    def video_maxn(video_id: str):
        if video_id not in tracks_by_video:
            return JSONResponse({"error": f"unknown video {video_id!r}"}, status_code=404)
        try:
            annotations = merged_annotations(run_dir, manifest)
        except AnnotationConflictError as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        kept = list(tracks_by_video[video_id].values())
        labeled = reconcile(kept, [a for a in annotations if a.video_id == video_id])
        report = compute_ssmaxn(labeled)
        return {
            "video_id": video_id,
            "rows": [
                {
                    "video_id": r.video_id,
                    "species": r.species,
                    "maxn": r.maxn,
                    "frame_index_at_max": r.frame_index_at_max,
                    "time_ms_at_max": r.time_ms_at_max,
                }
                for r in report.rows
            ],
        }

    @app.get("/api/species")
    def species_list():
        if species_file is None or not Path(species_file).exists():
            return {"species": []}
        lines = Path(species_file).read_text(encoding="utf-8").splitlines()
        return {"species": [s.strip() for s in lines if s.strip()]}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(
    run_dir: str | Path,
    port: int = 8000,
    host: str = "127.0.0.1",
    ui_dir: str | Path | None = None,
    species_file: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(run_dir, ui_dir=ui_dir, species_file=species_file)
    uvicorn.run(app, host=host, port=port)
