"""Batch front end: simulate | calibrate | estimate | evaluate.

Configuration is one JSON file with a section per command; unknown keys
anywhere are rejected. Command-line flags override the matching config
entries. Every command overwrites its outputs, so a rerun with the same
config and seed reproduces files byte for byte.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing or malformed files), 3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import fileio
from .calib import SyncSolveConfig, calibrate_rig, estimate_mobile_offset, evaluate_calibration
from .errors import (
    ConfigError,
    EmptyInput,
    RigposeError,
    SchemaError,
    UnknownCamera,
)
from .geometry import CameraModel, RigidTransform, compose, invert, project_points
from .metrics import aggregate_records, failure_record, pose_errors, recall_curve
from .mvpose import (
    MultiViewParams,
    PoseEstimate,
    estimate_multi_view,
    estimate_single_view,
    refine_on_depth,
)
from .robust import RansacParams
from .sim import RigSpec, SceneSpec, make_object_model, make_rig, simulate_board, simulate_object
from .trajectory import CalibrationBoard

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_SOLVER = 3

_TOP_SECTIONS = {"schema_version", "simulate", "calibrate", "estimate", "evaluate"}


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _strict_dataclass(cls, d: dict, where: str, casts=None):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kw = dict(d)
    for key, fn in (casts or {}).items():
        if key in kw:
            kw[key] = fn(kw[key])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _strict_keys(d: dict, allowed, where: str):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            cfg = json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    _strict_keys(cfg, _TOP_SECTIONS, f"config {path}")
    return cfg


def _ransac_from(d: dict, where: str) -> RansacParams:
    return _strict_dataclass(RansacParams, d, where)


def _sync_config(section: dict, where: str) -> SyncSolveConfig:
    section = dict(section)
    ransac = _ransac_from(section.pop("ransac", {}), where + ".ransac")
    cfg = _strict_dataclass(SyncSolveConfig, dict(section, ransac=ransac), where)
    return cfg


def _mv_params(section: dict, where: str) -> MultiViewParams:
    section = dict(section)
    ransac_d = section.pop("ransac", None)
    if ransac_d is None:
        return _strict_dataclass(MultiViewParams, section, where)
    ransac = _ransac_from(ransac_d, where + ".ransac")
    return _strict_dataclass(MultiViewParams, dict(section, ransac=ransac), where)


def _out_dir(args) -> str:
    out = args.output or "rigpose_out"
    os.makedirs(out, exist_ok=True)
    return out


def _in_dir(args) -> str:
    src = args.input or args.output or "rigpose_out"
    if not os.path.isdir(src):
        raise FileNotFoundError(f"input directory {src} does not exist")
    return src


def _depth_path(out: str, frame: int, camera_id: str) -> str:
    return os.path.join(out, "depth", f"frame_{frame:05d}_{camera_id}.bin")


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config).get("simulate", {})
    _strict_keys(cfg, {"rig", "scene", "board", "model"}, "simulate")
    rig_spec = _strict_dataclass(RigSpec, cfg.get("rig", {}), "simulate.rig")
    scene = _strict_dataclass(
        SceneSpec, cfg.get("scene", {}), "simulate.scene",
        casts={"distance_range_mm": tuple, "depth_views": tuple},
    )
    if args.seed is not None:
        scene = dataclasses.replace(scene, seed=args.seed)
    board_cfg = dict(cfg.get("board", {}))
    _strict_keys(board_cfg, {"rows", "cols", "spacing_mm"}, "simulate.board")
    board = CalibrationBoard.grid(
        board_cfg.get("rows", 5), board_cfg.get("cols", 7), board_cfg.get("spacing_mm", 40.0)
    )
    model_cfg = dict(cfg.get("model", {}))
    _strict_keys(model_cfg, {"seed", "n_points", "min_spacing_mm", "radii"}, "simulate.model")
    if "radii" in model_cfg:
        model_cfg["radii"] = tuple(model_cfg["radii"])
    model = make_object_model(**model_cfg)

    out = _out_dir(args)
    rig, truth = make_rig(rig_spec)
    board_sim = simulate_board(rig, truth, board, scene)
    obj_sim = simulate_object(rig, truth, model, scene)

    fileio.write_rig(os.path.join(out, "rig.json"), rig,
                     sync_groups=rig_spec.sync_groups, hand_eye=truth.hand_eye)
    fileio.write_track(os.path.join(out, "board_track.jsonl"), board_sim.board_track)
    fileio.write_corners(os.path.join(out, "corners.csv"), board_sim.observations)
    fileio.write_correspondences(os.path.join(out, "correspondences.jsonl"), obj_sim.frames)
    fileio.write_object_model(os.path.join(out, "object_model.json"), model)
    for cid, track in sorted(obj_sim.hmd_tracks.items()):
        fileio.write_track(os.path.join(out, f"track_{cid}.jsonl"), track)
    n_depth = 0
    if any(obj_sim.depths):
        os.makedirs(os.path.join(out, "depth"), exist_ok=True)
        for i, per_view in enumerate(obj_sim.depths):
            for cid, raster in sorted(per_view.items()):
                fileio.write_depth(_depth_path(out, i, cid), raster)
                n_depth += 1
    fileio.write_truth_sidecar(
        os.path.join(out, "truth.json"),
        clock_offsets=truth.clock_offsets,
        extrinsics=truth.extrinsics,
        hand_eye=truth.hand_eye,
        object_poses=obj_sim.truth_poses,
        frame_times=obj_sim.frame_times,
    )
    n_corners = sum(len(f) for seq in board_sim.observations.values() for f in seq.frames)
    n_samples = sum(len(d) for per in obj_sim.frames for d in per.values())
    print(f"cameras: {len(rig)}")
    print(f"board frames per camera: {len(board_sim.frame_times)} ({n_corners} corners total)")
    print(f"object frames: {len(obj_sim.frames)} ({n_samples} correspondence samples)")
    print(f"depth rasters: {n_depth}")
    print(f"output: {out}")
    return EXIT_OK


def _parse_sync_groups(flags) -> dict:
    groups = {}
    for flag in flags or []:
        if "=" not in flag:
            raise ConfigError(f"--sync-group expects NAME=CAM1,CAM2 (got {flag!r})")
        name, members = flag.split("=", 1)
        ids = [m for m in members.split(",") if m]
        if not name or not ids:
            raise ConfigError(f"--sync-group expects NAME=CAM1,CAM2 (got {flag!r})")
        groups[name] = ids
    return groups


def cmd_calibrate(args) -> int:
    cfg_all = _load_config(args.config)
    cfg = dict(cfg_all.get("calibrate", {}))
    _strict_keys(cfg, {"solver", "holdout_every", "sync_groups"}, "calibrate")
    sync = _sync_config(cfg.get("solver", {}), "calibrate.solver")
    holdout_every = int(cfg.get("holdout_every", 5))

    src = _in_dir(args)
    out = args.output or src
    os.makedirs(out, exist_ok=True)
    cameras, file_groups, hand_eye = fileio.read_rig(os.path.join(src, "rig.json"))
    observations = fileio.read_corners(os.path.join(src, "corners.csv"))
    board_track = fileio.read_track(os.path.join(src, "board_track.jsonl"))
    board = _board_from_corners(src)
    cam_by_id = {c.id: c for c in cameras}
    for cid in observations:
        if cid not in cam_by_id:
            raise UnknownCamera(f"corners reference unknown camera '{cid}'")

    sync_groups = dict(file_groups)
    sync_groups.update(cfg.get("sync_groups", {}))
    sync_groups.update(_parse_sync_groups(args.sync_group))
    for g, members in sync_groups.items():
        for cid in members:
            if cid not in cam_by_id:
                raise UnknownCamera(f"sync group '{g}' names unknown camera '{cid}'")

    mobile_ids = [cid for cid in sorted(observations)
                  if os.path.exists(os.path.join(src, f"track_{cid}.jsonl"))]
    static_obs = {cid: seq for cid, seq in observations.items() if cid not in mobile_ids}

    train, hold = {}, {}
    for cid, seq in static_obs.items():
        train[cid], hold[cid] = seq.holdout_split(every=holdout_every)
    intr = {c.id: c.intrinsics for c in cameras}

    calibration = calibrate_rig(train, board_track, board, intr, sync,
                                sync_groups={g: m for g, m in sync_groups.items()
                                             if all(c in static_obs for c in m)} or None)
    for cid in mobile_ids:
        if cid not in hand_eye:
            calibration.failures[cid] = "tracked camera without a hand_eye entry in rig.json"
            continue
        hmd_track = fileio.read_track(os.path.join(src, f"track_{cid}.jsonl"))
        try:
            calibration.mobile[cid] = estimate_mobile_offset(
                observations[cid], board_track, hmd_track, hand_eye[cid],
                board, intr[cid], sync,
            )
        except RigposeError as exc:
            calibration.failures[cid] = str(exc)

    fileio.write_calibration(os.path.join(out, "calibration.json"), calibration)
    report = evaluate_calibration(calibration.results, hold, board_track, board, intr,
                                  sync.max_track_gap)
    fileio.write_calib_report(os.path.join(out, "calib_report.json"), report)
    fileio.write_residuals_csv(os.path.join(out, "residuals.csv"),
                               _holdout_residuals(calibration.results, hold, board_track, board, intr,
                                                  sync.max_track_gap))

    for cid in sorted(calibration.results):
        r = calibration.results[cid]
        print(f"{cid}: offset {r.clock_offset * 1000:+.2f} ms, "
              f"inliers {r.inlier_ratio:.1%}, reproj {r.mean_reproj_error:.3f} px")
    for cid in sorted(calibration.mobile):
        m = calibration.mobile[cid]
        print(f"{cid}: offset {m.clock_offset * 1000:+.2f} ms (tracked), "
              f"objective {m.mean_reproj_error:.3f} px")
    for cid in sorted(calibration.failures):
        print(f"{cid}: FAILED: {calibration.failures[cid]}")
    print(f"report: mean reproj {report.mean_reproj_px:.3f} px, "
          f"mean position {report.mean_position_mm:.3f} mm")
    return EXIT_SOLVER if calibration.failures else EXIT_OK


def _board_from_corners(src: str) -> CalibrationBoard:
    path = os.path.join(src, "board.json")
    if os.path.exists(path):
        with open(path) as f:
            obj = json.load(f)
        return CalibrationBoard.grid(obj["rows"], obj["cols"], obj["spacing_mm"])
    # default board geometry matches the simulator's default
    return CalibrationBoard.grid(5, 7, 40.0)


def _holdout_residuals(results, holdout, board_track, board, intrinsics, max_gap):
    rows = []
    for cid in sorted(results):
        if cid not in holdout:
            continue
        res = results[cid]
        for frame in holdout[cid].frames:
            t = frame.timestamp + res.clock_offset
            if not board_track.valid_mask(np.array([t]), max_gap)[0]:
                continue
            q, p = board_track.sample(float(t))
            chain = compose(res.extrinsics, RigidTransform(q, p))
            px, ok = project_points(intrinsics[cid], chain.apply(board.points[frame.point_ids]))
            err = np.linalg.norm(px - frame.pixels, axis=1)
            for pid, e, good in zip(frame.point_ids, err, ok):
                if good:
                    rows.append((cid, frame.timestamp, int(pid), float(e)))
    return rows


def _camera_at_time(cid, static_cams, tracked, timestamp):
    """World-to-camera extrinsics at a camera-clock timestamp."""
    if cid in static_cams:
        return static_cams[cid]
    track, hand_eye, offset = tracked[cid]
    q, p = track.sample(timestamp + offset)
    return compose(hand_eye, invert(RigidTransform(q, p)))


def _estimate_frame(payload) -> list:
    """One frame's work: multi-view subsets, single views, depth polish."""
    (frame, tasks, singles, params, sv_ransac, model, depth_files) = payload
    rows = []
    for label, dists, cams in tasks:
        try:
            est = estimate_multi_view(dists, cams, params, model)
        except RigposeError as exc:
            est = PoseEstimate(None, 0.0, 0, f"error: {exc}", [c.id for c in cams])
        if est.status == "ok" and depth_files:
            est = _depth_polish(est, dists, cams, model, depth_files)
        rows.append((frame, label, est))
    for cid, dist, cam in singles:
        try:
            est = estimate_single_view(dist, cam.intrinsics, sv_ransac, model)
        except RigposeError as exc:
            est = PoseEstimate(None, 0.0, 0, f"error: {exc}", [cid])
        if est.status == "ok":
            # report in world coordinates like the multi-view rows
            world_pose = compose(invert(cam.extrinsics), est.pose)
            est = dataclasses.replace(est, pose=world_pose)
        rows.append((frame, cid, est))
    return rows


def _depth_polish(est, dists, cams, model, depth_files):
    for dist, cam in sorted(zip(dists, cams), key=lambda dc: dc[1].id):
        path = depth_files.get(cam.id)
        if path is None or not os.path.exists(path):
            continue
        depth = fileio.read_depth(path)
        pose_c = compose(cam.extrinsics, est.pose)
        ref = refine_on_depth(pose_c, depth, cam, model, dist.mask, dist.patch_origin)
        if ref.status == "ok":
            world = compose(invert(cam.extrinsics), ref.pose)
            return dataclasses.replace(est, pose=world)
        return est
    return est


def cmd_estimate(args) -> int:
    cfg = dict(_load_config(args.config).get("estimate", {}))
    _strict_keys(cfg, {"params", "subsets", "single_view", "multi_view", "refine_depth",
                       "single_view_ransac"}, "estimate")
    params = _mv_params(cfg.get("params", {}), "estimate.params")
    sv_ransac = _ransac_from(cfg.get("single_view_ransac", {"inlier_threshold": 5.0}),
                             "estimate.single_view_ransac")

    src = _in_dir(args)
    out = args.output or src
    os.makedirs(out, exist_ok=True)
    cameras, _, hand_eye = fileio.read_rig(os.path.join(src, "rig.json"))
    cam_by_id = {c.id: c for c in cameras}
    frames = fileio.read_correspondences(os.path.join(src, "correspondences.jsonl"))
    model = fileio.read_object_model(os.path.join(src, "object_model.json"))
    calib_path = args.calibration or os.path.join(src, "calibration.json")
    calibration = fileio.read_calibration(calib_path)

    static_cams = {}
    for cid, res in calibration.results.items():
        base = cam_by_id.get(cid)
        if base is None:
            raise UnknownCamera(f"calibration references unknown camera '{cid}'")
        static_cams[cid] = dataclasses.replace(
            base, extrinsics=res.extrinsics, clock_offset=res.clock_offset
        )
    tracked = {}
    for cid, he in hand_eye.items():
        track_path = os.path.join(src, f"track_{cid}.jsonl")
        if not os.path.exists(track_path):
            continue
        offset = calibration.mobile[cid].clock_offset if cid in calibration.mobile else 0.0
        tracked[cid] = (fileio.read_track(track_path), he, offset)
    available = set(static_cams) | set(tracked)

    subsets = [list(s) for s in cfg.get("subsets", [])]
    for views in args.views or []:
        subsets.append([v for v in views.split(",") if v])
    multi_view = bool(cfg.get("multi_view", True))
    single_view = bool(cfg.get("single_view", False))
    if args.single_view:
        single_view = True
        if not args.multi_view and not subsets and "subsets" not in cfg:
            multi_view = False
    if args.multi_view:
        multi_view = True
    if multi_view and not subsets:
        subsets = [sorted(static_cams)]
    if not multi_view:
        subsets = []
    refine_depth = bool(cfg.get("refine_depth", False)) or args.refine_depth

    for subset in subsets:
        if len(subset) < 2:
            raise ConfigError(f"subset {subset} needs at least 2 cameras")
        for cid in subset:
            if cid not in available:
                raise UnknownCamera(f"subset references unknown or uncalibrated camera '{cid}'")
    single_ids = sorted(available & set(cam_by_id)) if single_view else []

    payloads = []
    for i, per_view in enumerate(frames):
        tasks = []
        for subset in subsets:
            missing = [cid for cid in subset if cid not in per_view]
            if missing:
                raise SchemaError(f"frame {i} lacks correspondence data for {missing}")
            dists = [per_view[cid] for cid in subset]
            cams = [
                dataclasses.replace(
                    cam_by_id[cid],
                    extrinsics=_camera_at_time(cid, {k: v.extrinsics for k, v in static_cams.items()},
                                               tracked, per_view[cid].timestamp),
                )
                for cid in subset
            ]
            tasks.append(("+".join(subset), dists, cams))
        singles = []
        for cid in single_ids:
            if cid in per_view and len(per_view[cid]) >= 4:
                cam = dataclasses.replace(
                    cam_by_id[cid],
                    extrinsics=_camera_at_time(cid, {k: v.extrinsics for k, v in static_cams.items()},
                                               tracked, per_view[cid].timestamp),
                )
                singles.append((cid, per_view[cid], cam))
        depth_files = {}
        if refine_depth:
            for cid in per_view:
                path = _depth_path(src, i, cid)
                if os.path.exists(path):
                    depth_files[cid] = path
        payloads.append((i, tasks, singles, params, sv_ransac, model, depth_files))

    jobs = max(1, args.jobs or 1)
    if jobs == 1:
        results = [_estimate_frame(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_estimate_frame, payloads,
                                    chunksize=max(1, len(payloads) // (jobs * 4) or 1)))

    rows = [row for frame_rows in results for row in frame_rows]
    fileio.write_estimates(os.path.join(out, "estimates.jsonl"), rows)
    by_label = {}
    for _, label, est in rows:
        ok, n = by_label.get(label, (0, 0))
        by_label[label] = (ok + (est.status == "ok"), n + 1)
    for label in sorted(by_label):
        ok, n = by_label[label]
        print(f"{label}: ok {ok}/{n} ({(n - ok) / n:.1%} failed)")
    print(f"estimates: {os.path.join(out, 'estimates.jsonl')}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = dict(_load_config(args.config).get("evaluate", {}))
    _strict_keys(cfg, {"thresholds_mm", "thresholds_deg"}, "evaluate")
    src = _in_dir(args)
    out = args.output or src
    os.makedirs(out, exist_ok=True)

    estimates = fileio.read_estimates(os.path.join(src, "estimates.jsonl"))
    truth = fileio.read_truth_sidecar(os.path.join(src, "truth.json"))
    if "object_poses" not in truth:
        raise SchemaError("truth sidecar lacks object_poses")
    truth_poses = truth["object_poses"]
    model = fileio.read_object_model(os.path.join(src, "object_model.json"))

    calib_path = os.path.join(src, "calibration.json")
    axis_ref = {}
    if os.path.exists(calib_path):
        calibration = fileio.read_calibration(calib_path)
        cameras, _, _ = fileio.read_rig(os.path.join(src, "rig.json"))
        cam_by_id = {c.id: c for c in cameras}
        for cid, res in calibration.results.items():
            if cid in cam_by_id:
                axis_ref[cid] = dataclasses.replace(cam_by_id[cid], extrinsics=res.extrinsics)

    identity_ref = CameraModel(
        "world",
        next(iter(axis_ref.values())).intrinsics if axis_ref else _dummy_intrinsics(),
        RigidTransform.identity(), 0.0, None,
    )
    bad_frames = sorted({e["frame"] for e in estimates if not 0 <= e["frame"] < len(truth_poses)})
    if bad_frames:
        raise SchemaError(f"estimates reference frames without truth: {bad_frames[:10]}")

    by_label = {}
    for entry in estimates:
        by_label.setdefault(entry["subset"], []).append(entry)
    labels = sorted(by_label)
    records = {}
    for label in labels:
        ref = axis_ref.get(label.split("+")[0], identity_ref)
        recs = []
        for entry in by_label[label]:
            est = entry["estimate"]
            if est.status == "ok":
                recs.append(pose_errors(est, truth_poses[entry["frame"]], model, ref,
                                        frame=entry["frame"], config=label))
            else:
                recs.append(failure_record(entry["frame"], label, est.status))
        records[label] = recs

    all_records = [r for label in labels for r in records[label]]
    fileio.write_error_records_csv(os.path.join(out, "records.csv"), all_records)

    from .metrics import AblationReport

    report = AblationReport(rows=[aggregate_records(records[l], l) for l in labels],
                            records=all_records)
    fileio.write_ablation_json(os.path.join(out, "ablation.json"), report)
    fileio.write_ablation_csv(os.path.join(out, "ablation.csv"), report)

    th_mm = cfg.get("thresholds_mm", [round(0.25 * k, 2) for k in range(1, 41)])
    th_deg = cfg.get("thresholds_deg", [round(0.25 * k, 2) for k in range(1, 41)])
    recall_files = {}
    for label in labels:
        safe = label.replace("+", "-")
        for metric, ths in (("dt", th_mm), ("rot", th_deg)):
            curve = recall_curve(records[label], metric, ths)
            name = f"recall_{safe}_{metric}.csv"
            fileio.write_recall_csv(os.path.join(out, name), curve)
            recall_files[f"{label}:{metric}"] = name

    summary = {
        "schema_version": fileio.SCHEMA_VERSION,
        "rows": [r.to_dict() for r in report.rows],
        "recall_files": recall_files,
        "n_records": len(all_records),
        "conventions": {
            "means": "successful frames only",
            "failure_rate": "failures / all frames",
            "recall_denominator": "all frames including failures",
        },
    }
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, sort_keys=True, indent=1)
        f.write("\n")

    for row in report.rows:
        print(f"{row.config}: dt {row.dt_mean:.3f}±{row.dt_std:.3f} mm, "
              f"rot {row.rot_mean:.3f}±{row.rot_std:.3f} deg, "
              f"fail {row.failure_rate:.1%} ({row.n_failed}/{row.n_frames})")
    print(f"summary: {os.path.join(out, 'summary.json')}")
    return EXIT_OK


def _dummy_intrinsics():
    from .geometry import CameraIntrinsics

    return CameraIntrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=2, height=2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rigpose", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--output", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel frame workers")
        if needs_input:
            p.add_argument("--input", help="directory with upstream outputs")

    p_sim = sub.add_parser("simulate", help="generate a synthetic rig and scene")
    common(p_sim, needs_input=False)
    p_sim.add_argument("--seed", type=int, help="override the scene seed")
    p_sim.set_defaults(fn=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="solve extrinsics and clock offsets")
    common(p_cal, needs_input=True)
    p_cal.add_argument("--sync-group", action="append", metavar="NAME=CAM1,CAM2",
                       help="treat cameras as hardware-synchronized (repeatable)")
    p_cal.set_defaults(fn=cmd_calibrate)

    p_est = sub.add_parser("estimate", help="object pose estimation per frame")
    common(p_est, needs_input=True)
    p_est.add_argument("--views", action="append", metavar="CAM1,CAM2,...",
                       help="camera subset to estimate with (repeatable)")
    p_est.add_argument("--single-view", action="store_true",
                       help="also emit per-camera single-view estimates")
    p_est.add_argument("--multi-view", action="store_true",
                       help="force multi-view estimation on")
    p_est.add_argument("--refine-depth", action="store_true",
                       help="polish poses against available depth rasters")
    p_est.add_argument("--calibration", help="calibration JSON (default <input>/calibration.json)")
    p_est.set_defaults(fn=cmd_estimate)

    p_eval = sub.add_parser("evaluate", help="error tables and recall curves")
    common(p_eval, needs_input=True)
    p_eval.set_defaults(fn=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, UnknownCamera) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, EmptyInput, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RigposeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
