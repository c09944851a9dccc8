"""Evaluation suite: MaxN accuracy, detection P/R/F1 and mAP50, CLEAR-MOT
MOTA, and the exhaustive hyperparameter grid search that optimizes MOTA.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .assignment import min_cost_assignment
from .core import BBox, Track, iou

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# MaxN accuracy


@dataclass(frozen=True, slots=True)
class MaxNComparison:
    """Per video: (species, predicted maxn, true maxn) triples."""

    videos: Mapping[str, Sequence[tuple[str, int, int]]]

    def __post_init__(self) -> None:
        for video_id, rows in self.videos.items():
            species = [s for s, _, _ in rows]
            if len(species) != len(set(species)):
                raise ValueError(f"duplicate species in comparison for video {video_id}")
            for s, pred, true in rows:
                if pred < 0 or true < 0:
                    raise ValueError(f"negative maxn for {video_id}/{s}")


@dataclass(frozen=True, slots=True)
class MaxNAccuracyResult:
    per_video: dict[str, float]
    mean: float
    sd: float


def build_maxn_comparison(
    predicted: Mapping[str, Mapping[str, int]],
    truth: Mapping[str, Mapping[str, int]],
) -> MaxNComparison:
    """Pair predictions with truth over the union of species per video.

    A species present on only one side scores against an implicit 0 on the
    other, so spurious and missed species both count as incorrect.
    """
    videos: dict[str, list[tuple[str, int, int]]] = {}
    for video_id in sorted(set(predicted) | set(truth)):
        pred = predicted.get(video_id, {})
        true = truth.get(video_id, {})
        videos[video_id] = [
            (s, pred.get(s, 0), true.get(s, 0)) for s in sorted(set(pred) | set(true))
        ]
    return MaxNComparison(videos=videos)


def aggregate_accuracy(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; sd is 0 for fewer than 2."""
    n = len(values)
    if n == 0:
        raise ValueError("no per-video accuracies to aggregate")
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def maxn_accuracy(cmp: MaxNComparison) -> MaxNAccuracyResult:
    """Fraction of species per video whose predicted maxn matches the truth,
    aggregated as mean and sample standard deviation across videos.

    Videos with no species pairs are excluded with a warning.
    """
    per_video: dict[str, float] = {}
    for video_id, rows in cmp.videos.items():
        if not rows:
            logger.warning("video %s has no species pairs; excluded from accuracy", video_id)
            continue
        correct = sum(1 for _, pred, true in rows if pred == true)
        per_video[video_id] = correct / len(rows)
    mean, sd = aggregate_accuracy(list(per_video.values()))
    return MaxNAccuracyResult(per_video=per_video, mean=mean, sd=sd)


def read_maxn_truth(path: str | Path) -> dict[str, dict[str, int]]:
    """Ground-truth MaxN file: header video_id,species,maxn."""
    out: dict[str, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["video_id", "species", "maxn"]:
            raise ValueError(f"{path}: bad header {header!r}")
        for row in reader:
            if not row:
                continue
            video_id, species, maxn = row
            out.setdefault(video_id, {})[species] = int(maxn)
    return out


# ---------------------------------------------------------------------------
# Detection metrics


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Standard detection P/R/F1 with explicit zero-denominator conventions:
    precision 0 when nothing was predicted, recall 1 when nothing existed
    and nothing was hallucinated (else 0), F1 0 when P + R = 0.
    """
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 1.0 if fp == 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


@dataclass(frozen=True, slots=True)
class EvalFrame:
    """One frame's ground truth (class, box) and predictions (class, box, conf)."""

    gt: tuple[tuple[str, BBox], ...]
    preds: tuple[tuple[str, BBox, float], ...]


@dataclass(frozen=True, slots=True)
class DetectionEvalSet:
    frames: tuple[EvalFrame, ...]
    iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold {self.iou_threshold} outside (0, 1]")
        for f in self.frames:
            for _, _, conf in f.preds:
                if not 0.0 <= conf <= 1.0:
                    raise ValueError(f"prediction confidence {conf} outside [0, 1]")


def match_predictions(
    eval_set: DetectionEvalSet, cls: str
) -> tuple[list[bool], int]:
    """Greedy confidence-ordered matching for one class.

    Returns the TP/FP flag per prediction (confidence-descending order) and
    the ground-truth count. Each prediction takes the unmatched same-frame
    ground truth with the highest IoU at or above the threshold.
    """
    gt_by_frame: list[list[BBox]] = []
    preds: list[tuple[float, int, int, BBox]] = []  # (conf, frame, order, box)
    order = 0
    for fi, frame in enumerate(eval_set.frames):
        gt_by_frame.append([b for c, b in frame.gt if c == cls])
        for c, box, conf in frame.preds:
            if c == cls:
                preds.append((conf, fi, order, box))
                order += 1
    n_gt = sum(len(g) for g in gt_by_frame)
    # Stable by original order among equal confidences.
    preds.sort(key=lambda p: (-p[0], p[2]))
    taken = [set() for _ in gt_by_frame]
    flags: list[bool] = []
    for conf, fi, _, box in preds:
        best_iou, best_gi = 0.0, -1
        for gi, gt_box in enumerate(gt_by_frame[fi]):
            if gi in taken[fi]:
                continue
            v = iou(box, gt_box)
            if v >= eval_set.iou_threshold and v > best_iou:
                best_iou, best_gi = v, gi
        if best_gi >= 0:
            taken[fi].add(best_gi)
            flags.append(True)
        else:
            flags.append(False)
    return flags, n_gt


def average_precision(tp_flags: Sequence[bool], n_gt: int) -> float:
    """Area under the all-points-interpolated precision-recall curve."""
    if n_gt == 0:
        raise ValueError("average precision undefined without ground truth")
    if not tp_flags:
        return 0.0
    tp_cum = 0
    precisions: list[float] = []
    recalls: list[float] = []
    for i, flag in enumerate(tp_flags):
        tp_cum += int(flag)
        precisions.append(tp_cum / (i + 1))
        recalls.append(tp_cum / n_gt)
    mpre = [0.0] + precisions + [0.0]
    mrec = [0.0] + recalls + [1.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    return sum(
        (mrec[i] - mrec[i - 1]) * mpre[i]
        for i in range(1, len(mrec))
        if mrec[i] != mrec[i - 1]
    )


def map50(eval_set: DetectionEvalSet) -> tuple[dict[str, float], float]:
    """Per-class AP and the mean over classes that have ground truth.

    Classes predicted but absent from the ground truth score AP 0 with a
    warning and stay out of the mean.
    """
    gt_classes = sorted({c for f in eval_set.frames for c, _ in f.gt})
    pred_classes = sorted({c for f in eval_set.frames for c, _, _ in f.preds})
    per_class: dict[str, float] = {}
    for cls in gt_classes:
        flags, n_gt = match_predictions(eval_set, cls)
        per_class[cls] = average_precision(flags, n_gt)
    for cls in pred_classes:
        if cls not in per_class:
            logger.warning("class %r has predictions but no ground truth; AP set to 0", cls)
            per_class[cls] = 0.0
    mean = sum(per_class[c] for c in gt_classes) / len(gt_classes) if gt_classes else 0.0
    return per_class, mean


# ---------------------------------------------------------------------------
# CLEAR-MOT


@dataclass(frozen=True, slots=True)
class MOTFrame:
    """One frame's ground-truth (gt_id, box) and predicted (track_id, box)."""

    gt: tuple[tuple[int, BBox], ...]
    preds: tuple[tuple[int, BBox], ...]

    def __post_init__(self) -> None:
        for name, items in (("gt", self.gt), ("pred", self.preds)):
            ids = [i for i, _ in items]
            if len(ids) != len(set(ids)):
                raise ValueError(f"duplicate {name} ids within a frame: {ids}")


@dataclass(frozen=True, slots=True)
class MOTEvalSet:
    frames: tuple[MOTFrame, ...]
    iou_threshold: float = 0.5


@dataclass(frozen=True, slots=True)
class MOTResult:
    mota: float
    fp: int
    fn: int
    idsw: int
    gt_count: int


def mota(eval_set: MOTEvalSet) -> MOTResult:
    """CLEAR-MOT accuracy: 1 - (FP + FN + IDSW) / GT (can be negative).

    Correspondences persist: a ground-truth object keeps its last matched
    track while that pair still overlaps at the threshold; only then are
    leftover pairs assigned optimally on (1 - IoU). An identity switch is
    counted whenever an object's matched track differs from its last one.
    """
    fp = fn = idsw = gt_count = 0
    corr: dict[int, int] = {}  # gt_id -> last matched track_id
    for frame in eval_set.frames:
        gt_ids = [g for g, _ in frame.gt]
        gt_boxes = {g: b for g, b in frame.gt}
        pred_boxes = {p: b for p, b in frame.preds}
        gt_count += len(gt_ids)

        matches: dict[int, int] = {}
        used: set[int] = set()
        for g in gt_ids:
            t = corr.get(g)
            if t is not None and t in pred_boxes and t not in used:
                if iou(gt_boxes[g], pred_boxes[t]) >= eval_set.iou_threshold:
                    matches[g] = t
                    used.add(t)

        rem_gt = [g for g in gt_ids if g not in matches]
        rem_pred = [p for p, _ in frame.preds if p not in used]
        if rem_gt and rem_pred:
            iou_mat = np.array(
                [[iou(gt_boxes[g], pred_boxes[p]) for p in rem_pred] for g in rem_gt]
            )
            for r, c in min_cost_assignment(1.0 - iou_mat):
                if iou_mat[r, c] >= eval_set.iou_threshold:
                    g, t = rem_gt[r], rem_pred[c]
                    if g in corr and corr[g] != t:
                        idsw += 1
                    matches[g] = t
                    used.add(t)

        fp += len(frame.preds) - len(used)
        fn += len(gt_ids) - len(matches)
        corr.update(matches)

    if gt_count == 0:
        raise ValueError("no ground-truth boxes in any frame; MOTA is undefined")
    return MOTResult(
        mota=1.0 - (fp + fn + idsw) / gt_count,
        fp=fp, fn=fn, idsw=idsw, gt_count=gt_count,
    )


def mot_eval_from_tracks(
    gt_tracks: Sequence[Track],
    pred_tracks: Sequence[Track],
    iou_threshold: float = 0.5,
) -> MOTEvalSet:
    """Frame-align two track sets (e.g. scenario truth vs tracker output)."""
    last = -1
    per_frame_gt: dict[int, list[tuple[int, BBox]]] = {}
    per_frame_pred: dict[int, list[tuple[int, BBox]]] = {}
    for tracks, sink in ((gt_tracks, per_frame_gt), (pred_tracks, per_frame_pred)):
        for t in tracks:
            for d in t.detections:
                sink.setdefault(d.frame_index, []).append((t.track_id, d.box))
                last = max(last, d.frame_index)
    frames = tuple(
        MOTFrame(
            gt=tuple(per_frame_gt.get(i, [])),
            preds=tuple(per_frame_pred.get(i, [])),
        )
        for i in range(last + 1)
    )
    return MOTEvalSet(frames=frames, iou_threshold=iou_threshold)


def read_mot_gt(path: str | Path) -> dict[str, dict[int, list[tuple[int, BBox]]]]:
    """Ground-truth MOT file: header video_id,frame_index,gt_id,x1,y1,x2,y2."""
    out: dict[str, dict[int, list[tuple[int, BBox]]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["video_id", "frame_index", "gt_id", "x1", "y1", "x2", "y2"]:
            raise ValueError(f"{path}: bad header {header!r}")
        for row in reader:
            if not row:
                continue
            video_id, frame_index, gt_id = row[0], int(row[1]), int(row[2])
            box = BBox(*(float(v) for v in row[3:7]))
            out.setdefault(video_id, {}).setdefault(frame_index, []).append((gt_id, box))
    return out


# ---------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True, slots=True)
class GridSpec:
    """Finite parameter grid; the objective is always MOTA."""

    axes: Mapping[str, Sequence]

    def __post_init__(self) -> None:
        if not self.axes:
            raise ValueError("grid needs at least one axis")
        for name, values in self.axes.items():
            if len(values) == 0:
                raise ValueError(f"axis {name!r} has no candidate values")

    def cells(self) -> Iterable[dict]:
        names = list(self.axes)
        for combo in itertools.product(*(self.axes[n] for n in names)):
            yield dict(zip(names, combo))


@dataclass(frozen=True, slots=True)
class GridCell:
    params: dict
    result: MOTResult | None
    error: str | None = None


@dataclass(frozen=True, slots=True)
class GridSearchResult:
    best: GridCell
    cells: list[GridCell]


def grid_search(
    grid: GridSpec, runner: Callable[[dict], MOTResult]
) -> GridSearchResult:
    """Evaluate every cell and return the MOTA argmax.

    Ties prefer fewer identity switches, then the earliest cell in grid
    enumeration order. A runner failure marks its cell failed and the
    search continues.
    """
    cells: list[GridCell] = []
    for params in grid.cells():
        try:
            cells.append(GridCell(params=params, result=runner(dict(params))))
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            logger.warning("grid cell %s failed: %s", params, exc)
            cells.append(GridCell(params=params, result=None, error=str(exc)))
    scored = [
        (c.result.mota, -c.result.idsw, -i, c)
        for i, c in enumerate(cells)
        if c.result is not None
    ]
    if not scored:
        raise ValueError("every grid cell failed; nothing to optimize")
    best = max(scored)[3]
    return GridSearchResult(best=best, cells=cells)


def write_grid_table(result: GridSearchResult, path: str | Path) -> None:
    """Full result table: one column per axis plus mota, fp, fn, idsw."""
    if not result.cells:
        return
    axes = list(result.cells[0].params)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(axes + ["mota", "fp", "fn", "idsw", "status"]) + "\n")
        for cell in result.cells:
            values = [str(cell.params[a]) for a in axes]
            if cell.result is None:
                values += ["", "", "", "", f"failed: {cell.error}"]
            else:
                r = cell.result
                values += [f"{r.mota:.6f}", str(r.fp), str(r.fn), str(r.idsw), "ok"]
            fh.write(",".join(values) + "\n")
