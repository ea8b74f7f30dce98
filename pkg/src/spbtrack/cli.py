"""Command-line entry points: track, eval, ablate, generate.

Every run writes a JSON manifest next to its outputs (config snapshot, input
paths, seed, throughput) so results can be replayed. Config values come from
a key-value file (``--config`` or the SPBTRACK_CONFIG environment variable),
with individual flags overriding the file.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import itertools
import json
import os
import sys
import time

from . import __version__, io, metrics, simgen
from .errors import SpbTrackError
from .io import RunConfig, build_config, parse_kv_file
from .lifecycle import Tracker

SWEEP_PARAMS = ("variant", "metric", "prefilter", "decimate")


def _load_run_config(config_path, overrides: dict[str, str]) -> RunConfig:
    values: dict[str, str] = {}
    path = config_path or os.environ.get("SPBTRACK_CONFIG")
    if path:
        values.update(parse_kv_file(path))
    values.update(overrides)
    return build_config(values)


def track_frames(frames, run_cfg: RunConfig):
    """Run the tracker over in-memory frames.

    Returns (rows, tracker) where rows are (frame, id, Box3D, score).
    """
    prefilter = run_cfg.options.prefilter_conf
    tracker = Tracker(run_cfg.filter_cfg, run_cfg.assoc_cfg, run_cfg.life_cfg)
    rows = []
    for frame in frames:
        if prefilter > 0.0:
            frame = io.FrameInput(
                frame=frame.frame, timestamp=frame.timestamp,
                detections=[d for d in frame.detections if d.confidence >= prefilter],
                ego=frame.ego)
        for out in tracker.step(frame):
            rows.append((frame.frame, out.id, out.box, out.score))
    return rows, tracker


def _write_manifest(path, run_cfg: RunConfig, inputs: dict, tracker: Tracker,
                    wall_seconds: float) -> None:
    frames = max(tracker.frames_processed, 1)
    manifest = {
        "version": __version__,
        "config": run_cfg.as_dict(),
        "inputs": inputs,
        "seed": run_cfg.options.seed,
        "timing": {
            "frames": tracker.frames_processed,
            "frames_per_second": tracker.frames_processed / wall_seconds
            if wall_seconds > 0 else float("inf"),
            "stage_ms_per_frame": {
                stage: 1000.0 * seconds / frames
                for stage, seconds in tracker.stage_seconds.items()
            },
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_track(args) -> int:
    overrides = {}
    if args.variant:
        overrides["variant"] = args.variant
    if args.metric:
        overrides["metric"] = args.metric
    if args.prefilter is not None:
        overrides["prefilter_conf"] = str(args.prefilter)
    if args.frame_rate is not None:
        overrides["frame_rate"] = str(args.frame_rate)
    run_cfg = _load_run_config(args.config, overrides)

    ego_poses = io.read_ego_poses(args.ego_poses) if args.ego_poses else None
    load = io.read_kitti_detections(args.detections,
                                    frame_rate=run_cfg.options.frame_rate,
                                    ego_poses=ego_poses)
    if args.features:
        _, sidecar = io.read_feature_sidecar(args.features)
        io.attach_features(load.frames, sidecar)

    t0 = time.perf_counter()
    rows, tracker = track_frames(load.frames, run_cfg)
    wall = time.perf_counter() - t0

    io.write_tracks(args.out, rows)
    inputs = {"detections": os.path.abspath(args.detections),
              "ego_poses": os.path.abspath(args.ego_poses) if args.ego_poses else None,
              "features": os.path.abspath(args.features) if args.features else None,
              "skipped_classes": load.skipped_classes,
              "confidence_normalized": load.confidence_normalized}
    _write_manifest(args.out + ".manifest.json", run_cfg, inputs, tracker, wall)

    fps = tracker.frames_processed / wall if wall > 0 else float("inf")
    stage_ms = {k: 1000.0 * v / max(tracker.frames_processed, 1)
                for k, v in tracker.stage_seconds.items()}
    print(f"tracked {tracker.frames_processed} frames in {wall:.3f}s "
          f"({fps:.1f} frames/s)")
    print("per-stage ms/frame: " + ", ".join(
        f"{k}={v:.3f}" for k, v in stage_ms.items()))
    if load.confidence_normalized:
        print("note: detection scores fell outside [0,1]; min-max normalized")
    return 0


def cmd_eval(args) -> int:
    gt = io.read_kitti_tracks(args.gt)
    pred = io.read_kitti_tracks(args.results)
    report = metrics.evaluate_sequences({"seq": (gt, pred)}, iou_thres=args.iou_thres)
    print(report.to_table())
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    return 0


def _parse_sweep(raw: list[str]) -> dict[str, list[str]]:
    sweeps: dict[str, list[str]] = {}
    for item in raw or []:
        name, _, values = item.partition(":")
        name = name.strip()
        if name not in SWEEP_PARAMS:
            raise SpbTrackError(f"unknown sweep parameter {name!r}; "
                                f"choose from {SWEEP_PARAMS}")
        sweeps[name] = [v.strip() for v in values.split(",") if v.strip()]
        if not sweeps[name]:
            raise SpbTrackError(f"sweep parameter {name!r} has no values")
    return sweeps


def run_ablation_cell(spec: simgen.ScenarioSpec, seed: int, cell: dict[str, str],
                      base_values: dict[str, str]):
    """One (cell, seed) run: generate, maybe decimate, track, evaluate."""
    scenario = simgen.generate(dataclasses.replace(spec, seed=seed))
    frames = scenario.det_frames
    gt = scenario.gt_frames
    factor = int(cell.get("decimate", "1"))
    values = dict(base_values)
    if factor > 1:
        frames = simgen.decimate(frames, factor)
        gt = simgen.decimate_gt(gt, factor)
        values["frame_rate"] = str(spec.frame_rate / factor)
    if "variant" in cell:
        values["variant"] = cell["variant"]
    if "metric" in cell:
        values["metric"] = cell["metric"]
    if "prefilter" in cell:
        values["prefilter_conf"] = cell["prefilter"]
    values["seed"] = str(seed)
    run_cfg = build_config(values)

    rows, _ = track_frames(frames, run_cfg)
    pred_frames: dict[int, list[io.TrackedBox]] = {}
    for frame, tid, box, score in rows:
        pred_frames.setdefault(frame, []).append(
            io.TrackedBox(track_id=tid, box=box, score=score))
    report = metrics.evaluate_sequences({"seq": (gt, pred_frames)})
    return report.aggregate


ABLATE_COLUMNS = ("variant", "metric", "prefilter", "decimate", "seed",
                  "sAMOTA", "AMOTA", "AMOTP", "MOTA", "MOTP", "recall",
                  "precision", "F1", "IDs", "IDs_best_MOTA", "TP", "FP", "FN", "GT")


def run_ablation(spec: simgen.ScenarioSpec, sweeps: dict[str, list[str]],
                 seeds: list[int], base_values: dict[str, str] | None = None,
                 workers: int = 1):
    """Cross-product sweep; returns CSV-ready rows in deterministic order."""
    base_values = dict(base_values or {})
    names = sorted(sweeps)
    combos = [dict(zip(names, vals))
              for vals in itertools.product(*(sweeps[n] for n in names))]
    if not combos:
        combos = [{}]
    tasks = [(cell, seed) for cell in combos for seed in seeds]

    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ablation_worker,
                                    [(spec, seed, cell, base_values)
                                     for cell, seed in tasks]))
    else:
        results = [run_ablation_cell(spec, seed, cell, base_values)
                   for cell, seed in tasks]

    rows = []
    for (cell, seed), agg in zip(tasks, results):
        rows.append({
            "variant": cell.get("variant", base_values.get("variant", "dukf")),
            "metric": cell.get("metric", base_values.get("metric", "mciou_fs")),
            "prefilter": cell.get("prefilter", base_values.get("prefilter_conf", "0.0")),
            "decimate": cell.get("decimate", "1"),
            "seed": seed,
            "sAMOTA": agg.samota, "AMOTA": agg.amota, "AMOTP": agg.amotp,
            "MOTA": agg.mota, "MOTP": agg.motp, "recall": agg.recall,
            "precision": agg.precision, "F1": agg.f1, "IDs": agg.ids,
            "IDs_best_MOTA": agg.ids_best_mota,
            "TP": agg.tp, "FP": agg.fp, "FN": agg.fn, "GT": agg.gt,
        })
    return rows


def _ablation_worker(packed):
    spec, seed, cell, base_values = packed
    return run_ablation_cell(spec, seed, cell, base_values)


def ablation_csv(rows) -> str:
    lines = [",".join(ABLATE_COLUMNS)]
    for row in rows:
        lines.append(",".join(
            f"{row[c]:.6f}" if isinstance(row[c], float) else str(row[c])
            for c in ABLATE_COLUMNS))
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    spec = simgen.spec_from_file(args.scenario)
    sweeps = _parse_sweep(args.sweep)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [spec.seed]
    rows = run_ablation(spec, sweeps, seeds, workers=args.workers)
    csv_text = ablation_csv(rows)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    print(f"wrote {len(rows)} ablation rows to {args.out}")
    return 0


def cmd_generate(args) -> int:
    spec = simgen.spec_from_file(args.spec)
    scenario = simgen.generate(spec)
    paths = simgen.write_scenario(scenario, args.out_dir)
    for role, path in sorted(paths.items()):
        print(f"{role}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spbtrack",
        description="LiDAR person tracking-by-detection with evaluation tools")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="run the tracker over a detection file")
    p_track.add_argument("--detections", required=True)
    p_track.add_argument("--ego-poses", dest="ego_poses")
    p_track.add_argument("--features")
    p_track.add_argument("--config")
    p_track.add_argument("--out", required=True)
    p_track.add_argument("--variant", choices=("kf", "ukf", "dukf"))
    p_track.add_argument("--metric", choices=("giou", "mciou", "mciou_fs"))
    p_track.add_argument("--prefilter", type=float)
    p_track.add_argument("--frame-rate", dest="frame_rate", type=float)
    p_track.set_defaults(func=cmd_track)

    p_eval = sub.add_parser("eval", help="score results against ground truth")
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--results", required=True)
    p_eval.add_argument("--iou-thres", dest="iou_thres", type=float, default=0.25)
    p_eval.add_argument("--out-csv", dest="out_csv")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="sweep tracker settings on a scenario")
    p_ablate.add_argument("--scenario", required=True)
    p_ablate.add_argument("--sweep", action="append",
                          help="param:v1,v2,... (variant, metric, prefilter, decimate)")
    p_ablate.add_argument("--seeds", help="comma-separated seed list")
    p_ablate.add_argument("--out", required=True)
    p_ablate.add_argument("--workers", type=int, default=1)
    p_ablate.set_defaults(func=cmd_ablate)

    p_gen = sub.add_parser("generate", help="write a synthetic scenario to disk")
    p_gen.add_argument("--spec", required=True)
    p_gen.add_argument("--out-dir", dest="out_dir", required=True)
    p_gen.set_defaults(func=cmd_generate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SpbTrackError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
