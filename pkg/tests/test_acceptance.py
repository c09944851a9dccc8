"""Acceptance suite: one test per release criterion.

Each test prints an `ACCEPTANCE <name>: PASS|FAIL` line and enforces its
stated tolerance and runtime budget. Run with `pytest tests/test_acceptance.py -v -s`.
"""

import random
import time
from contextlib import contextmanager

import numpy as np
from fastapi.testclient import TestClient

from bruvkit import analysis, metrics, postfilter, tracker
from bruvkit.core import UNCLASSIFIED, BBox, VideoMeta, iou, track_max_center_displacement, track_span_s
from bruvkit.ingest import ClutterEmitter, ScenarioSpec, ScriptedActor, build_schedule, synthesize
from bruvkit.inpaint import (
    DEFAULT_BRIGHTNESS_THRESHOLD,
    RasterImage,
    find_bright_components,
    grayscale,
    inpaint,
)
from bruvkit.service import RunManifest, ScenarioSource, analyze, create_app, finalize
from bruvkit.tracker import KalmanFilter, TrackerConfig, write_tracked_csv

from conftest import box_at, random_walk_track
from oracles import (
    naive_average_precision,
    naive_bright_rects,
    naive_mota,
    naive_ssmaxn,
)


@contextmanager
def criterion(name: str, budget_s: float | None = None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    if budget_s is not None and elapsed >= budget_s:
        print(f"ACCEPTANCE {name}: FAIL (runtime {elapsed:.2f}s >= {budget_s}s)")
        raise AssertionError(f"{name} exceeded runtime budget: {elapsed:.2f}s >= {budget_s}s")
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s)")


def test_maxn_accuracy_aggregation_matches_reported_numbers():
    with criterion("maxn-accuracy-aggregation", budget_s=1.0):
        mean, sd = metrics.aggregate_accuracy([0.818, 0.878, 0.978])
        assert abs(mean - 0.891) <= 0.001
        assert abs(sd - 0.081) <= 0.001


def test_postfilter_matches_bruteforce_and_is_monotone():
    with criterion("postfilter-oracle", budget_s=5.0):
        rng = random.Random(4242)
        # 1000 randomized tracks under randomized thresholds, exact partition
        tracks = [random_walk_track(rng, i + 1, max_len=20) for i in range(1000)]
        for _ in range(10):
            cfg = postfilter.PostFilterConfig(
                min_span_s=rng.uniform(0.0, 5.0),
                min_displacement=rng.uniform(0.0, 0.3),
                keep_conf=rng.uniform(0.0, 1.0),
            )
            kept, removed = postfilter.apply(tracks, cfg)
            expected_removed = [
                t
                for t in tracks
                if (
                    track_span_s(t) < cfg.min_span_s
                    or track_max_center_displacement(t) < cfg.min_displacement
                )
                and t.max_confidence < cfg.keep_conf
            ]
            expected_kept = [t for t in tracks if t not in expected_removed]
            assert kept == expected_kept
            assert removed == expected_removed

        # monotonicity over 100 random threshold sweeps
        sweep_tracks = tracks[:150]
        for _ in range(100):
            lo, hi = sorted((rng.uniform(0, 1), rng.uniform(0, 1)))
            _, removed_lo = postfilter.apply(sweep_tracks, postfilter.PostFilterConfig(keep_conf=lo))
            _, removed_hi = postfilter.apply(sweep_tracks, postfilter.PostFilterConfig(keep_conf=hi))
            assert {t.track_id for t in removed_lo} <= {t.track_id for t in removed_hi}

            lo_s, hi_s = sorted((rng.uniform(0, 5), rng.uniform(0, 5)))
            sus_lo = postfilter.select_suspects(sweep_tracks, postfilter.PostFilterConfig(min_span_s=lo_s))
            sus_hi = postfilter.select_suspects(sweep_tracks, postfilter.PostFilterConfig(min_span_s=hi_s))
            assert {t.track_id for t in sus_lo} <= {t.track_id for t in sus_hi}


def test_tracker_on_synthetic_scenarios():
    with criterion("tracker-synthetic-scenarios", budget_s=10.0):
        meta = VideoMeta("v1", 10_000, 640, 480)
        schedule = build_schedule(meta, 3)

        # (a) single constant-velocity actor over 30 frames
        single = synthesize(
            ScenarioSpec(
                video=meta,
                actors=(ScriptedActor("ray", 0, 10_000, cx=0.2, cy=0.5, vx=0.05),),
            ),
            schedule,
            seed=0,
        )
        tracks = tracker.run(single.frames)
        r = metrics.mota(metrics.mot_eval_from_tracks(single.gt_tracks, tracks))
        assert len(tracks) == 1
        assert r.mota == 1.0 and r.idsw == 0

        # (b) two non-overlapping actors
        double = synthesize(
            ScenarioSpec(
                video=meta,
                actors=(
                    ScriptedActor("ray", 0, 10_000, cx=0.2, cy=0.25, vx=0.05),
                    ScriptedActor("ray", 0, 10_000, cx=0.8, cy=0.75, vx=-0.05),
                ),
            ),
            schedule,
            seed=0,
        )
        tracks = tracker.run(double.frames)
        r = metrics.mota(metrics.mot_eval_from_tracks(double.gt_tracks, tracks))
        assert len(tracks) == 2
        assert r.mota == 1.0

        # (c) occlusion vs the lost buffer (default 9 frames)
        def occluded(gap_frames: int) -> int:
            t0 = schedule.time_ms_of(10)
            t1 = schedule.time_ms_of(10 + gap_frames)
            spec = ScenarioSpec(
                video=meta,
                actors=(
                    ScriptedActor("ray", 0, 10_000, cx=0.3, cy=0.5, vx=0.01, gaps=((t0, t1),)),
                ),
            )
            return len(tracker.run(synthesize(spec, schedule, 0).frames))

        assert occluded(5) == 1  # gap < lost_buffer_frames: bridged
        assert occluded(11) == 2  # gap > lost_buffer_frames: new identity

        # determinism: byte-identical serialized output across repeated runs
        import pathlib
        import tempfile

        with tempfile.TemporaryDirectory() as d:
            payloads = []
            for name in ("a.csv", "b.csv"):
                path = pathlib.Path(d) / name
                write_tracked_csv(tracker.run(double.frames), path)
                payloads.append(path.read_bytes())
            assert payloads[0] == payloads[1]


def test_ssmaxn_matches_bruteforce_counting():
    with criterion("ssmaxn-oracle", budget_s=5.0):
        rng = random.Random(77)
        for _ in range(200):
            tracks = []
            unlabeled_kept = False
            for i in range(rng.randint(1, 20)):
                label = rng.choice(["sp_a", "sp_b", "sp_c", None])
                t = random_walk_track(rng, i + 1, video_id=rng.choice(["v1", "v2"]), label=label)
                if rng.random() < 0.2:
                    t = t.as_rejected()
                elif label is None:
                    unlabeled_kept = True
                tracks.append(t)
            report = analysis.compute_ssmaxn(tracks)
            got = {(r.video_id, r.species): (r.maxn, r.frame_index_at_max) for r in report.rows}
            assert got == naive_ssmaxn(tracks)
            # rejected tracks contribute nothing
            kept_only = analysis.compute_ssmaxn([t for t in tracks if not t.rejected])
            assert kept_only == report
            # the unclassified pseudo-species row appears iff unlabeled kept tracks exist
            has_unclassified = any(r.species == UNCLASSIFIED for r in report.rows)
            assert has_unclassified == unlabeled_kept


def test_ap_and_mota_match_bruteforce():
    with criterion("ap-mota-oracles", budget_s=5.0):
        rng = random.Random(555)

        def rand_box(max_size=0.3):
            x1, y1 = rng.uniform(0, 0.6), rng.uniform(0, 0.6)
            return BBox(x1, y1, x1 + rng.uniform(0.05, max_size), y1 + rng.uniform(0.05, max_size))

        def xyxy(b):
            return (b.x1, b.y1, b.x2, b.y2)

        # worked AP example: 2 GT, predictions TP/FP/TP by confidence -> 0.8333
        g1, g2 = box_at(0.2, 0.2), box_at(0.7, 0.7)
        frames = (
            metrics.EvalFrame(
                gt=(("fish", g1), ("fish", g2)),
                preds=(("fish", g1, 0.9), ("fish", box_at(0.45, 0.45), 0.8), ("fish", g2, 0.7)),
            ),
        )
        _, mean_ap = metrics.map50(metrics.DetectionEvalSet(frames=frames))
        assert abs(mean_ap - 0.8333333333) <= 1e-9

        # worked CLEAR-MOT example: 10 GT, one each FP/FN/IDSW -> exactly 0.7
        b = box_at(0.5, 0.5)
        far = box_at(0.1, 0.1)
        gt = [[(1, b)] for _ in range(10)]
        preds = [[(7, b)] for _ in range(10)]
        preds[3] = [(7, b), (99, far)]
        preds[5] = []
        for i in range(6, 10):
            preds[i] = [(8, b)]
        mot_frames = tuple(
            metrics.MOTFrame(gt=tuple(g), preds=tuple(p)) for g, p in zip(gt, preds)
        )
        r = metrics.mota(metrics.MOTEvalSet(frames=mot_frames))
        assert r.mota == 0.7
        assert (r.fp, r.fn, r.idsw) == (1, 1, 1)

        # randomized AP sets, tolerance 1e-12
        for _ in range(40):
            n_frames = rng.randint(1, 10)
            frames, total = [], 0
            for _ in range(n_frames):
                n_gt = rng.randint(0, 2)
                n_pred = rng.randint(0, 2)
                if total + n_gt + n_pred > 20:
                    break
                total += n_gt + n_pred
                frames.append(
                    metrics.EvalFrame(
                        gt=tuple(("fish", rand_box()) for _ in range(n_gt)),
                        preds=tuple(
                            ("fish", rand_box(), round(rng.uniform(0.1, 1.0), 2))
                            for _ in range(n_pred)
                        ),
                    )
                )
            if not frames or sum(len(f.gt) for f in frames) == 0:
                continue
            eval_set = metrics.DetectionEvalSet(frames=tuple(frames))
            per_class, _ = metrics.map50(eval_set)
            oracle = naive_average_precision(
                [
                    ([(c, xyxy(bb)) for c, bb in f.gt], [(c, xyxy(bb), cf) for c, bb, cf in f.preds])
                    for f in frames
                ],
                "fish",
                0.5,
            )
            assert abs(per_class["fish"] - oracle) <= 1e-12

        # randomized MOT sets, tolerance 1e-12
        for _ in range(40):
            n_frames = rng.randint(1, 10)
            frames, total_gt = [], 0
            for _ in range(n_frames):
                n_gt, n_pred = rng.randint(0, 2), rng.randint(0, 2)
                gt = [(i, rand_box()) for i in range(n_gt)]
                preds = []
                for i in range(n_pred):
                    if gt and rng.random() < 0.6:
                        base = rng.choice(gt)[1]
                        s = rng.uniform(-0.02, 0.02)
                        preds.append(
                            (
                                rng.randint(10, 13),
                                BBox(
                                    max(0, base.x1 + s),
                                    max(0, base.y1 + s),
                                    min(1, base.x2 + s),
                                    min(1, base.y2 + s),
                                ),
                            )
                        )
                    else:
                        preds.append((rng.randint(10, 13), rand_box()))
                preds = list({p: (p, bb) for p, bb in preds}.values())
                total_gt += n_gt
                frames.append(metrics.MOTFrame(gt=tuple(gt), preds=tuple(preds)))
            if total_gt == 0:
                continue
            r = metrics.mota(metrics.MOTEvalSet(frames=tuple(frames)))
            exp = naive_mota(
                [
                    ([(g, xyxy(bb)) for g, bb in f.gt], [(p, xyxy(bb)) for p, bb in f.preds])
                    for f in frames
                ],
                0.5,
            )
            assert (r.fp, r.fn, r.idsw, r.gt_count) == exp[1:]
            assert abs(r.mota - exp[0]) <= 1e-12


def test_kalman_numerics():
    with criterion("kalman-numerics"):
        kf = KalmanFilter()
        state = kf.initiate(box_at(0.5, 0.5, 0.1, 0.1))
        for i in range(1000):
            state = kf.predict(state)
            if i % 4 != 3:  # periodic misses keep the covariance moving
                cx = 0.5 + 0.25 * np.sin(i / 25)
                cy = 0.5 + 0.25 * np.cos(i / 35)
                state = kf.update(state, box_at(cx, cy, 0.1, 0.1))
            asym = np.abs(state.covariance - state.covariance.T).max()
            assert asym <= 1e-9
            assert np.linalg.eigvalsh(state.covariance).min() >= -1e-9

        # noiseless constant-velocity target: prediction error below 1e-6
        kf = KalmanFilter()
        vx, vy = 0.003, -0.002
        state = kf.initiate(box_at(0.3, 0.6, 0.1, 0.1))
        errors = []
        for k in range(1, 80):
            state = kf.predict(state)
            cx, cy = 0.3 + vx * k, 0.6 + vy * k
            errors.append(float(np.hypot(state.mean[0] - cx, state.mean[1] - cy)))
            state = kf.update(state, box_at(cx, cy, 0.1, 0.1))
        tail = errors[3:]
        assert all(a >= b for a, b in zip(tail, tail[1:]))
        assert tail[-1] < 1e-6


def test_inpainting_oracle_and_idempotence():
    with criterion("inpainting"):
        rng = random.Random(31)

        def random_img(h=20, w=26, p=0.1):
            px = np.zeros((h, w, 3), dtype=np.uint8)
            for y in range(h):
                for x in range(w):
                    if rng.random() < p:
                        px[y, x] = (255, 255, 255)
                    else:
                        px[y, x] = tuple(rng.randrange(0, 210) for _ in range(3))
            return RasterImage(pixels=px)

        # synthetic white text: rectangles equal the brute-force mask rects
        text = np.zeros((40, 120, 3), dtype=np.uint8)
        text[:] = (20, 40, 60)
        for k, (r0, c0) in enumerate([(5, 10), (5, 30), (5, 50), (20, 10)]):
            text[r0 : r0 + 9, c0 : c0 + 6 + k] = 250
        img = RasterImage(pixels=text)
        got = [(r.top, r.left, r.bottom, r.right) for r in find_bright_components(img)]
        assert got == naive_bright_rects(img.pixels.tolist(), DEFAULT_BRIGHTNESS_THRESHOLD)

        for _ in range(100):
            img = random_img()
            got = [(r.top, r.left, r.bottom, r.right) for r in find_bright_components(img)]
            assert got == naive_bright_rects(img.pixels.tolist(), DEFAULT_BRIGHTNESS_THRESHOLD)
            once = inpaint(img)
            assert np.array_equal(once.pixels, inpaint(once).pixels)
            g = grayscale(once)
            for top, left, bottom, right in got:
                assert (g[top : bottom + 1, left : right + 1] <= DEFAULT_BRIGHTNESS_THRESHOLD).all()


def _end_to_end_scenario() -> ScenarioSpec:
    meta = VideoMeta("v1", 10_000, 320, 240)
    return ScenarioSpec(
        video=meta,
        actors=(
            # two carcharhinus_perezi with overlapping presence -> ssMaxN 2
            ScriptedActor("carcharhinus_perezi", 0, 9000, cx=0.2, cy=0.2, vx=0.05, confidence=0.9),
            ScriptedActor("carcharhinus_perezi", 2000, 10_000, cx=0.75, cy=0.2, vx=-0.05, confidence=0.9),
            ScriptedActor("aetobatus_narinari", 1000, 8000, cx=0.5, cy=0.75, vy=0.01, confidence=0.85),
        ),
        clutter=(ClutterEmitter(cx=0.1, cy=0.9, width=0.06, height=0.06, confidence=0.65),),
    )


def _species_by_overlap(kept, gt_tracks) -> dict[int, str]:
    """Map each predicted track to the species of its best-overlapping truth."""
    out = {}
    for t in kept:
        best, best_species = 0.0, None
        for g in gt_tracks:
            by_frame = {d.frame_index: d.box for d in g.detections}
            score = sum(
                iou(d.box, by_frame[d.frame_index])
                for d in t.detections
                if d.frame_index in by_frame
            )
            if score > best:
                best, best_species = score, g.label
        assert best_species is not None
        out[t.track_id] = best_species
    return out


def test_end_to_end_scenario_and_grid_search(tmp_path):
    with criterion("end-to-end"):
        spec = _end_to_end_scenario()
        schedule = build_schedule(spec.video, 3)
        synthetic = synthesize(spec, schedule, seed=11)
        assert synthetic.gt_maxn == {"carcharhinus_perezi": 2, "aetobatus_narinari": 1}

        run_dir = tmp_path / "run"
        analyze(run_dir, [ScenarioSource(spec=spec, seed=11)])
        manifest = RunManifest.load(run_dir)
        kept_ids = manifest.videos["v1"].kept_tracks
        assert len(kept_ids) == 3
        assert len(manifest.videos["v1"].removed_tracks) == 1

        kept = tracker.read_tracked_csv(run_dir / "tracked" / "v1.csv")
        species_of = _species_by_overlap(kept, synthetic.gt_tracks)
        tracks_dir = run_dir / "tracks" / "v1"
        for track_id, species in species_of.items():
            (tracks_dir / f"{track_id}.jpg").rename(tracks_dir / f"{track_id}-{species}.jpg")

        report = finalize(run_dir)
        got = {r.species: r.maxn for r in report.rows}
        assert got == synthetic.gt_maxn

        # grid search over a 3x2 grid returns the exhaustive-scan argmax
        grid = metrics.GridSpec(
            axes={"match_iou_stage1": [0.2, 0.3, 0.5], "lost_buffer_frames": [3, 9]}
        )

        def runner(params):
            cfg = TrackerConfig(**params)
            tracks = tracker.run(synthetic.frames, cfg)
            kept, _ = postfilter.apply(tracks, postfilter.PostFilterConfig())
            return metrics.mota(metrics.mot_eval_from_tracks(synthetic.gt_tracks, kept))

        result = metrics.grid_search(grid, runner)
        assert len(result.cells) == 6
        scan_best = max(
            ((c.result.mota, -c.result.idsw, -i, c) for i, c in enumerate(result.cells)),
        )[3]
        assert result.best is scan_best


def test_annotation_path_equivalence(tmp_path):
    with criterion("annotation-path-equivalence"):
        spec = _end_to_end_scenario()
        schedule = build_schedule(spec.video, 3)
        synthetic = synthesize(spec, schedule, seed=11)

        fs_run = tmp_path / "fs_run"
        analyze(fs_run, [ScenarioSource(spec=spec, seed=11)])
        kept = tracker.read_tracked_csv(fs_run / "tracked" / "v1.csv")
        species_of = _species_by_overlap(kept, synthetic.gt_tracks)
        reject_id = min(species_of)  # reject one track through both paths
        tracks_dir = fs_run / "tracks" / "v1"
        for track_id, species in species_of.items():
            if track_id == reject_id:
                (tracks_dir / f"{track_id}.jpg").unlink()
            else:
                (tracks_dir / f"{track_id}.jpg").rename(tracks_dir / f"{track_id}-{species}.jpg")
        finalize(fs_run)

        api_run = tmp_path / "api_run"
        analyze(api_run, [ScenarioSource(spec=spec, seed=11)])
        client = TestClient(create_app(api_run))
        for track_id, species in species_of.items():
            body = (
                {"verdict": "rejected"}
                if track_id == reject_id
                else {"verdict": "labeled", "species": species}
            )
            assert client.put(f"/api/tracks/v1/{track_id}/annotation", json=body).status_code == 200
        finalize(api_run)

        assert (fs_run / "maxn.csv").read_bytes() == (api_run / "maxn.csv").read_bytes()
