"""Command-line entry points for the full pipeline."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import yaml

from . import analysis, inpaint as inpaint_mod, metrics, service
from .core import VideoMeta
from .ingest import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_SAMPLING_FPS,
    build_schedule,
    load_scenario,
    synthesize,
)
from .postfilter import PostFilterConfig
from .tracker import TrackerConfig, read_tracked_csv
from . import tracker as tracker_mod
from . import postfilter as postfilter_mod


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise click.ClickException(f"config file {path} must contain a mapping")
    return cfg


def _configs_from(cfg: dict) -> tuple[TrackerConfig, PostFilterConfig, float, float]:
    tracker_cfg = TrackerConfig(**cfg.get("tracker", {}))
    postfilter_cfg = PostFilterConfig(**cfg.get("postfilter", {}))
    fps = cfg.get("fps", DEFAULT_SAMPLING_FPS)
    conf = cfg.get("conf_threshold", DEFAULT_CONF_THRESHOLD)
    return tracker_cfg, postfilter_cfg, fps, conf


@click.group()
def main() -> None:
    """Underwater-video MaxN pipeline: track, filter, review, report."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Run directory to create.")
@click.option("--scenario", type=click.Path(exists=True), help="Synthetic scenario YAML.")
@click.option("--seed", type=int, default=0, show_default=True, help="Scenario RNG seed.")
@click.option("--detections", type=click.Path(exists=True), help="Reference detection file.")
@click.option("--video-id", help="Video id for --detections input.")
@click.option("--duration-ms", type=int, help="Video duration for --detections input.")
@click.option("--width", type=int, default=1920, show_default=True)
@click.option("--height", type=int, default=1080, show_default=True)
@click.option("--fps", type=float, default=None, help="Sampling rate (default 3).")
@click.option("--conf-threshold", type=float, default=None, help="Ingestion confidence floor (default 0.2).")
@click.option("--config", "config_path", type=click.Path(exists=True), help="YAML overriding all defaults.")
@click.option("--frames-dir", type=click.Path(exists=True), help="Pre-extracted frame rasters for image export.")
@click.option("--min-span-s", type=float, default=None, help="Post-filter: suspect tracks shorter than this.")
@click.option("--min-displacement", type=float, default=None, help="Post-filter: suspect tracks moving less than this.")
@click.option("--keep-conf", type=float, default=None, help="Post-filter: confidence that saves a suspect.")
@click.option("--resume", is_flag=True, help="Pick up a partial run from its manifest.")
def analyze(out_dir, scenario, seed, detections, video_id, duration_ms, width, height,
            fps, conf_threshold, config_path, frames_dir,
            min_span_s, min_displacement, keep_conf, resume):
    """Track and filter one video into a run directory."""
    cfg = _load_config(config_path)
    try:
        tracker_cfg, postfilter_cfg, cfg_fps, cfg_conf = _configs_from(cfg)
        pf_overrides = {
            k: v
            for k, v in (
                ("min_span_s", min_span_s),
                ("min_displacement", min_displacement),
                ("keep_conf", keep_conf),
            )
            if v is not None
        }
        if pf_overrides:
            postfilter_cfg = PostFilterConfig(
                **{
                    "min_span_s": postfilter_cfg.min_span_s,
                    "min_displacement": postfilter_cfg.min_displacement,
                    "keep_conf": postfilter_cfg.keep_conf,
                    **pf_overrides,
                }
            )
        fps = fps if fps is not None else cfg_fps
        conf_threshold = conf_threshold if conf_threshold is not None else cfg_conf

        if scenario is not None:
            source: service.VideoSource = service.ScenarioSource(
                spec=load_scenario(scenario), seed=seed
            )
        elif detections is not None:
            if video_id is None or duration_ms is None:
                raise click.ClickException("--detections needs --video-id and --duration-ms")
            source = service.DetectionFileSource(
                path=Path(detections),
                meta=VideoMeta(video_id, duration_ms, width, height),
            )
        else:
            raise click.ClickException("provide either --scenario or --detections")

        frame_store = (
            analysis.DirectoryFrameStore(frames_dir) if frames_dir is not None else None
        )
        manifest = service.analyze(
            out_dir,
            [source],
            fps=fps,
            conf_threshold=conf_threshold,
            tracker_config=tracker_cfg,
            postfilter_config=postfilter_cfg,
            frame_store=frame_store,
            resume=resume,
        )
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    for vid, vr in manifest.videos.items():
        click.echo(
            f"{vid}: {len(vr.kept_tracks)} tracks kept, "
            f"{len(vr.removed_tracks)} removed, "
            f"{len(vr.exported_images)} images exported -> {out_dir}"
        )


@main.command()
@click.argument("run_dir", type=click.Path(exists=True))
def finalize(run_dir):
    """Collect verdicts, reconcile labels, and write the MaxN report."""
    try:
        report = service.finalize(run_dir)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(report.to_csv_text(), nl=False)
    click.echo(f"wrote {Path(run_dir) / 'maxn.csv'}", err=True)


@main.group()
def eval():
    """Evaluation against ground truth."""


@eval.command("maxn")
@click.option("--pred", required=True, type=click.Path(exists=True), help="MaxN report file.")
@click.option("--truth", required=True, type=click.Path(exists=True), help="Truth file video_id,species,maxn.")
def eval_maxn(pred, truth):
    """MaxN accuracy of a report against expert truth."""
    report = analysis.read_maxn_report(pred)
    predicted: dict[str, dict[str, int]] = {}
    for r in report.rows:
        predicted.setdefault(r.video_id, {})[r.species] = r.maxn
    cmp = metrics.build_maxn_comparison(predicted, metrics.read_maxn_truth(truth))
    result = metrics.maxn_accuracy(cmp)
    for vid in sorted(result.per_video):
        click.echo(f"{vid}: accuracy {result.per_video[vid]:.4f}")
    click.echo(f"mean {result.mean:.4f}  sd {result.sd:.4f}")


@eval.command("det")
@click.option("--gt", required=True, type=click.Path(exists=True), help="Ground-truth box file.")
@click.option("--pred", required=True, type=click.Path(exists=True), help="Tracked detection file.")
@click.option("--iou-threshold", type=float, default=0.5, show_default=True)
def eval_det(gt, pred, iou_threshold):
    """Single-class detection AP at the given IoU threshold."""
    gt_frames = metrics.read_mot_gt(gt)
    pred_tracks = read_tracked_csv(pred)
    per_frame_preds: dict[tuple[str, int], list] = {}
    for t in pred_tracks:
        for d in t.detections:
            per_frame_preds.setdefault((d.video_id, d.frame_index), []).append(
                ("elasmobranch", d.box, d.confidence)
            )
    keys = sorted(
        {(v, f) for v, frames in gt_frames.items() for f in frames} | set(per_frame_preds)
    )
    frames = tuple(
        metrics.EvalFrame(
            gt=tuple(("elasmobranch", b) for _, b in gt_frames.get(v, {}).get(f, [])),
            preds=tuple(per_frame_preds.get((v, f), [])),
        )
        for v, f in keys
    )
    per_class, mean = metrics.map50(
        metrics.DetectionEvalSet(frames=frames, iou_threshold=iou_threshold)
    )
    for cls in sorted(per_class):
        click.echo(f"AP[{cls}] = {per_class[cls]:.4f}")
    click.echo(f"mAP = {mean:.4f}")


@eval.command("mot")
@click.option("--gt", required=True, type=click.Path(exists=True), help="Ground-truth MOT file.")
@click.option("--pred", required=True, type=click.Path(exists=True), help="Tracked detection file.")
@click.option("--iou-threshold", type=float, default=0.5, show_default=True)
def eval_mot(gt, pred, iou_threshold):
    """CLEAR-MOT accuracy of tracked output against ground-truth tracks."""
    gt_frames = metrics.read_mot_gt(gt)
    pred_tracks = read_tracked_csv(pred)
    per_video_preds: dict[str, dict[int, list]] = {}
    for t in pred_tracks:
        for d in t.detections:
            per_video_preds.setdefault(d.video_id, {}).setdefault(d.frame_index, []).append(
                (t.track_id, d.box)
            )
    for video_id in sorted(gt_frames):
        gt_by_frame = gt_frames[video_id]
        pred_by_frame = per_video_preds.get(video_id, {})
        last = max(list(gt_by_frame) + list(pred_by_frame))
        frames = tuple(
            metrics.MOTFrame(
                gt=tuple(gt_by_frame.get(i, [])), preds=tuple(pred_by_frame.get(i, []))
            )
            for i in range(last + 1)
        )
        try:
            r = metrics.mota(metrics.MOTEvalSet(frames=frames, iou_threshold=iou_threshold))
        except ValueError as exc:
            raise click.ClickException(str(exc)) from exc
        click.echo(
            f"{video_id}: MOTA {r.mota:.4f} (fp {r.fp}, fn {r.fn}, idsw {r.idsw}, gt {r.gt_count})"
        )


@main.command()
@click.option("--scenario", required=True, type=click.Path(exists=True), help="Labeled scenario YAML.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True),
              help="YAML mapping of parameter name to candidate list.")
@click.option("--fps", type=float, default=DEFAULT_SAMPLING_FPS, show_default=True)
@click.option("--out", "table_path", type=click.Path(), help="Where to write the full result table.")
def tune(scenario, seed, grid_path, fps, table_path):
    """Grid-search tracker/post-filter parameters, optimizing MOTA."""
    spec = load_scenario(scenario)
    schedule = build_schedule(spec.video, fps)
    synthetic = synthesize(spec, schedule, seed)
    with open(grid_path, encoding="utf-8") as fh:
        axes = yaml.safe_load(fh)
    if not isinstance(axes, dict):
        raise click.ClickException("grid file must map parameter names to value lists")

    tracker_fields = set(TrackerConfig.__dataclass_fields__)
    postfilter_fields = set(PostFilterConfig.__dataclass_fields__)
    unknown = [k for k in axes if k not in tracker_fields | postfilter_fields]
    if unknown:
        raise click.ClickException(f"unknown grid parameters: {unknown}")

    def runner(params: dict) -> metrics.MOTResult:
        t_cfg = TrackerConfig(**{k: v for k, v in params.items() if k in tracker_fields})
        p_cfg = PostFilterConfig(**{k: v for k, v in params.items() if k in postfilter_fields})
        tracks = tracker_mod.run(synthetic.frames, t_cfg)
        kept, _ = postfilter_mod.apply(tracks, p_cfg)
        return metrics.mota(metrics.mot_eval_from_tracks(synthetic.gt_tracks, kept))

    result = metrics.grid_search(metrics.GridSpec(axes=axes), runner)
    if table_path:
        metrics.write_grid_table(result, table_path)
        click.echo(f"wrote {table_path}", err=True)
    best = result.best
    assert best.result is not None
    click.echo(f"best: {best.params} -> MOTA {best.result.mota:.4f} (idsw {best.result.idsw})")


@main.command("inpaint")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--threshold", type=int, default=inpaint_mod.DEFAULT_BRIGHTNESS_THRESHOLD,
              show_default=True)
def inpaint_cmd(in_dir, out_dir, threshold):
    """Cover burned-in bright text with black rectangles, per image."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for path in sorted(in_dir.iterdir()):
        if path.suffix.lower() not in (".ppm", ".png", ".jpg", ".jpeg"):
            continue
        img = inpaint_mod.read_image(path)
        inpaint_mod.write_image(inpaint_mod.inpaint(img, threshold), out_dir / path.name)
        count += 1
    click.echo(f"inpainted {count} images -> {out_dir}")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False),
              help="Built review UI to serve at /.")
@click.option("--species-file", type=click.Path(exists=True, dir_okay=False),
              help="Autocomplete list, one species per line.")
def serve(run_dir, port, host, ui_dir, species_file):
    """Serve the review API (and optionally the review UI) for a run."""
    try:
        service.serve(run_dir, port=port, host=host, ui_dir=ui_dir, species_file=species_file)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    sys.exit(main())
