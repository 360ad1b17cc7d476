"""Versioned on-disk formats shared by the CLI and the library.

Every format carries a schema_version; readers accept any minor revision
of a known major version and reject the rest. JSON is written with sorted
keys and one trailing newline so identical inputs produce byte-identical
files. Depth rasters are a small binary container: magic "RPD1", two
little-endian uint32 dimensions (width, height), then row-major uint16
little-endian millimeters with 0 meaning invalid.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .calib import RigCalibration, StaticCalibResult
from .errors import EmptyInput, SchemaError
from .geometry import CameraIntrinsics, CameraModel, RigidTransform
from .mvpose import CorrespondenceDistribution, ObjectModel
from .trajectory import CornerFrame, CornerObservationSequence, PoseTrack

SCHEMA_VERSION = "1.0"
_MAJOR = SCHEMA_VERSION.split(".")[0]
_DEPTH_MAGIC = b"RPD1"


def _check_version(version, what: str):
    if not isinstance(version, str) or version.split(".")[0] != _MAJOR:
        raise SchemaError(f"{what}: unsupported schema_version {version!r}")


def _dump_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=1)
        f.write("\n")


def _load_json(path, what: str) -> dict:
    with open(path) as f:
        obj = json.load(f)
    _check_version(obj.get("schema_version"), what)
    return obj


def _intr_to_dict(intr: CameraIntrinsics) -> dict:
    return {
        "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
        "width": intr.width, "height": intr.height,
        "dist": [intr.k1, intr.k2, intr.k3, intr.p1, intr.p2],
    }


def _intr_from_dict(d) -> CameraIntrinsics:
    k1, k2, k3, p1, p2 = d.get("dist", [0.0] * 5)
    return CameraIntrinsics(
        fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
        width=d["width"], height=d["height"], k1=k1, k2=k2, k3=k3, p1=p1, p2=p2,
    )


def write_rig(path, cameras, sync_groups=None, calibrated=False, hand_eye=None):
    """Rig description JSON. With calibrated=False only intrinsics and sync
    groups are written (no extrinsics, no offsets): simulated rigs must not
    leak ground truth into the files the solvers read. hand_eye maps tracked
    (mobile) camera ids to their device-to-camera transform, which is rig
    geometry rather than per-scene truth."""
    cams = []
    for c in sorted(cameras, key=lambda c: c.id):
        entry = {"id": c.id, "intrinsics": _intr_to_dict(c.intrinsics), "sync_group": c.sync_group}
        if calibrated:
            entry["extrinsics"] = c.extrinsics.to_dict()
            entry["clock_offset"] = c.clock_offset
        cams.append(entry)
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "cameras": cams,
        "sync_groups": {k: list(v) for k, v in sorted((sync_groups or {}).items())},
        "hand_eye": {k: v.to_dict() for k, v in sorted((hand_eye or {}).items())},
    })


def read_rig(path):
    """-> (list of CameraModel, sync_groups dict, hand_eye dict). Uncalibrated
    entries get identity extrinsics and zero offset."""
    obj = _load_json(path, "rig")
    cams = []
    for e in obj["cameras"]:
        ext = RigidTransform.from_dict(e["extrinsics"]) if "extrinsics" in e else RigidTransform.identity()
        cams.append(CameraModel(
            id=e["id"],
            intrinsics=_intr_from_dict(e["intrinsics"]),
            extrinsics=ext,
            clock_offset=float(e.get("clock_offset", 0.0)),
            sync_group=e.get("sync_group"),
        ))
    hand_eye = {k: RigidTransform.from_dict(v) for k, v in obj.get("hand_eye", {}).items()}
    return cams, dict(obj.get("sync_groups", {})), hand_eye


def write_track(path, track: PoseTrack):
    """JSONL: header line, then one timed pose per line."""
    with open(path, "w") as f:
        f.write(json.dumps({
            "schema_version": SCHEMA_VERSION,
            "type": "pose_track",
            "frame_from": track.frame_from,
            "frame_to": track.frame_to,
        }, sort_keys=True) + "\n")
        for tp in track.samples:
            f.write(json.dumps({
                "t": tp.timestamp,
                "q": [float(v) for v in tp.pose.q],
                "p": [float(v) for v in tp.pose.t],
            }, sort_keys=True) + "\n")


def read_track(path) -> PoseTrack:
    with open(path) as f:
        header = json.loads(f.readline())
        _check_version(header.get("schema_version"), "track")
        if header.get("type") != "pose_track":
            raise SchemaError(f"track: unexpected type {header.get('type')!r}")
        times, quats, trans = [], [], []
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            times.append(row["t"])
            quats.append(row["q"])
            trans.append(row["p"])
    if not times:
        raise EmptyInput(f"track file {path} has no samples")
    return PoseTrack(np.array(times), np.array(quats), np.array(trans),
                     frame_from=header.get("frame_from", "body"),
                     frame_to=header.get("frame_to", "world"))


def write_corners(path, observations: dict):
    """CSV of corner detections for any number of cameras.

    Columns: camera_id, timestamp, point_id, u, v. The first line is a
    comment carrying the schema version.
    """
    with open(path, "w", newline="") as f:
        f.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(f)
        w.writerow(["camera_id", "timestamp", "point_id", "u", "v"])
        for cid in sorted(observations):
            for frame in observations[cid].frames:
                for pid, (u, v) in zip(frame.point_ids, frame.pixels):
                    w.writerow([cid, repr(float(frame.timestamp)), int(pid), repr(float(u)), repr(float(v))])


def read_corners(path) -> dict:
    with open(path) as f:
        first = f.readline()
        if not first.startswith("# schema_version:"):
            raise SchemaError("corner csv: missing schema_version comment")
        _check_version(first.split(":", 1)[1].strip(), "corner csv")
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["camera_id", "timestamp", "point_id", "u", "v"]:
            raise SchemaError(f"corner csv: unexpected header {header}")
        rows = {}
        for cid, ts, pid, u, v in reader:
            rows.setdefault(cid, {}).setdefault(float(ts), []).append((int(pid), float(u), float(v)))
    out = {}
    for cid, by_time in rows.items():
        frames = []
        for ts in sorted(by_time):
            recs = by_time[ts]
            frames.append(CornerFrame(ts, np.array([r[0] for r in recs]),
                                      np.array([[r[1], r[2]] for r in recs])))
        out[cid] = CornerObservationSequence(cid, frames)
    return out


def mask_to_rle(mask: np.ndarray) -> list:
    """Row-major run lengths, first run counting zeros (possibly 0)."""
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    if len(flat) == 0:
        return []
    change = np.flatnonzero(np.diff(flat)) + 1
    runs = np.diff(np.concatenate([[0], change, [len(flat)]]))
    out = runs.tolist()
    if flat[0]:
        out = [0] + out
    return out


def rle_to_mask(rle, shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos = 0
    value = False
    for run in rle:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    if pos != len(flat):
        raise SchemaError("mask rle does not cover the stated shape")
    return flat.reshape(shape)


def write_correspondences(path, frames):
    """JSONL: header line, then one line per (frame, camera)."""
    with open(path, "w") as f:
        f.write(json.dumps({
            "schema_version": SCHEMA_VERSION,
            "type": "correspondence_frames",
            "n_frames": len(frames),
        }, sort_keys=True) + "\n")
        for i, per_view in enumerate(frames):
            for cid in sorted(per_view):
                d = per_view[cid]
                f.write(json.dumps({
                    "frame": i,
                    "camera_id": d.camera_id,
                    "timestamp": d.timestamp,
                    "pixels": [[float(u), float(v)] for u, v in d.pixels],
                    "points": [[float(a) for a in p] for p in d.points],
                    "weights": [float(w) for w in d.weights],
                    "mask_rle": mask_to_rle(d.mask),
                    "mask_shape": list(d.mask.shape),
                    "patch_origin": [int(v) for v in d.patch_origin],
                }, sort_keys=True) + "\n")


def read_correspondences(path) -> list:
    """-> list over frames of dict camera_id -> CorrespondenceDistribution."""
    with open(path) as f:
        header = json.loads(f.readline())
        _check_version(header.get("schema_version"), "correspondences")
        if header.get("type") != "correspondence_frames":
            raise SchemaError(f"correspondences: unexpected type {header.get('type')!r}")
        frames = [dict() for _ in range(int(header["n_frames"]))]
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            mask = rle_to_mask(row["mask_rle"], tuple(row["mask_shape"]))
            dist = CorrespondenceDistribution(
                row["camera_id"],
                row["timestamp"],
                np.array(row["pixels"], dtype=float).reshape(-1, 2),
                np.array(row["points"], dtype=float).reshape(-1, 3),
                np.array(row["weights"], dtype=float),
                mask,
                tuple(row["patch_origin"]),
            )
            frames[int(row["frame"])][dist.camera_id] = dist
    return frames


def write_depth(path, depth_mm: np.ndarray):
    d = np.asarray(depth_mm)
    if d.ndim != 2:
        raise ValueError("depth raster must be 2D")
    data = np.clip(np.round(d), 0, 65535).astype("<u2")
    h, w = d.shape
    with open(path, "wb") as f:
        f.write(_DEPTH_MAGIC)
        f.write(np.array([w, h], dtype="<u4").tobytes())
        f.write(data.tobytes())


def read_depth(path) -> np.ndarray:
    """-> float mm array; 0 stays 0 (invalid)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _DEPTH_MAGIC:
            raise SchemaError(f"depth raster: bad magic {magic!r}")
        w, h = np.frombuffer(f.read(8), dtype="<u4")
        data = np.frombuffer(f.read(), dtype="<u2")
    if len(data) != int(w) * int(h):
        raise SchemaError("depth raster: truncated payload")
    return data.reshape(int(h), int(w)).astype(float)


def write_object_model(path, model: ObjectModel):
    obj = {
        "schema_version": SCHEMA_VERSION,
        "id": model.id,
        "surface_points": [[float(a) for a in p] for p in model.surface_points],
        "diameter": float(model.diameter),
    }
    if model.mesh_vertices is not None:
        obj["mesh_vertices"] = [[float(a) for a in p] for p in model.mesh_vertices]
    _dump_json(path, obj)


def read_object_model(path) -> ObjectModel:
    obj = _load_json(path, "object model")
    mesh = obj.get("mesh_vertices")
    return ObjectModel(
        obj["id"],
        np.array(obj["surface_points"], dtype=float),
        mesh_vertices=np.array(mesh, dtype=float) if mesh is not None else None,
        diameter=obj.get("diameter"),
    )


def write_truth_sidecar(path, clock_offsets=None, extrinsics=None, hand_eye=None,
                        object_poses=None, frame_times=None):
    """Ground truth the solvers never see; only the evaluator reads this."""
    obj = {"schema_version": SCHEMA_VERSION}
    if clock_offsets is not None:
        obj["clock_offsets"] = {k: float(v) for k, v in sorted(clock_offsets.items())}
    if extrinsics is not None:
        obj["extrinsics"] = {k: v.to_dict() for k, v in sorted(extrinsics.items())}
    if hand_eye is not None:
        obj["hand_eye"] = {k: v.to_dict() for k, v in sorted(hand_eye.items())}
    if object_poses is not None:
        obj["object_poses"] = [p.to_dict() for p in object_poses]
    if frame_times is not None:
        obj["frame_times"] = [float(t) for t in frame_times]
    _dump_json(path, obj)


def read_truth_sidecar(path) -> dict:
    obj = _load_json(path, "truth sidecar")
    out = {"schema_version": obj["schema_version"]}
    if "clock_offsets" in obj:
        out["clock_offsets"] = {k: float(v) for k, v in obj["clock_offsets"].items()}
    if "extrinsics" in obj:
        out["extrinsics"] = {k: RigidTransform.from_dict(v) for k, v in obj["extrinsics"].items()}
    if "hand_eye" in obj:
        out["hand_eye"] = {k: RigidTransform.from_dict(v) for k, v in obj["hand_eye"].items()}
    if "object_poses" in obj:
        out["object_poses"] = [RigidTransform.from_dict(v) for v in obj["object_poses"]]
    if "frame_times" in obj:
        out["frame_times"] = [float(t) for t in obj["frame_times"]]
    return out


def _calib_result_to_dict(r: StaticCalibResult) -> dict:
    return {
        "camera_id": r.camera_id,
        "extrinsics": r.extrinsics.to_dict(),
        "clock_offset": r.clock_offset,
        "inlier_ratio": r.inlier_ratio,
        "mean_reproj_error": r.mean_reproj_error,
        "residual_count": r.residual_count,
    }


def write_calibration(path, calibration: RigCalibration):
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "results": {cid: _calib_result_to_dict(r) for cid, r in sorted(calibration.results.items())},
        "failures": dict(sorted(calibration.failures.items())),
        "group_offsets": {k: float(v) for k, v in sorted(calibration.group_offsets.items())},
        "mobile": {
            cid: {
                "clock_offset": m.clock_offset,
                "mean_reproj_error": m.mean_reproj_error,
                "residual_count": m.residual_count,
            }
            for cid, m in sorted(calibration.mobile.items())
        },
    })


def read_calibration(path) -> RigCalibration:
    from .calib import MobileSyncResult

    obj = _load_json(path, "calibration")
    results = {}
    for cid, d in obj["results"].items():
        results[cid] = StaticCalibResult(
            extrinsics=RigidTransform.from_dict(d["extrinsics"]),
            clock_offset=float(d["clock_offset"]),
            inlier_ratio=float(d["inlier_ratio"]),
            mean_reproj_error=float(d["mean_reproj_error"]),
            residual_count=int(d["residual_count"]),
            camera_id=cid,
        )
    mobile = {
        cid: MobileSyncResult(
            clock_offset=float(d["clock_offset"]),
            mean_reproj_error=float(d["mean_reproj_error"]),
            residual_count=int(d["residual_count"]),
        )
        for cid, d in obj.get("mobile", {}).items()
    }
    return RigCalibration(
        results=results,
        failures=dict(obj.get("failures", {})),
        group_offsets={k: float(v) for k, v in obj.get("group_offsets", {}).items()},
        mobile=mobile,
    )


def write_calib_report(path, report):
    obj = {"schema_version": SCHEMA_VERSION}
    obj.update(report.to_dict())
    _dump_json(path, obj)


def write_residuals_csv(path, rows):
    """Per-observation residual rows: (camera_id, timestamp, point_id, residual_px)."""
    with open(path, "w", newline="") as f:
        f.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(f)
        w.writerow(["camera_id", "timestamp", "point_id", "residual_px"])
        for cid, ts, pid, r in rows:
            w.writerow([cid, repr(float(ts)), int(pid), repr(float(r))])


def write_estimates(path, estimates):
    """JSONL of (frame, subset label, PoseEstimate) triples."""
    with open(path, "w") as f:
        f.write(json.dumps({
            "schema_version": SCHEMA_VERSION,
            "type": "pose_estimates",
        }, sort_keys=True) + "\n")
        for frame, label, est in estimates:
            f.write(json.dumps({
                "frame": int(frame),
                "subset": label,
                "status": est.status,
                "pose": est.pose.to_dict() if est.pose is not None else None,
                "score": float(est.score),
                "inlier_count": int(est.inlier_count),
                "views_used": list(est.views_used),
            }, sort_keys=True) + "\n")


def read_estimates(path) -> list:
    """-> list of dicts with pose decoded to RigidTransform (or None)."""
    from .mvpose import PoseEstimate

    with open(path) as f:
        header = json.loads(f.readline())
        _check_version(header.get("schema_version"), "estimates")
        if header.get("type") != "pose_estimates":
            raise SchemaError(f"estimates: unexpected type {header.get('type')!r}")
        out = []
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            pose = RigidTransform.from_dict(row["pose"]) if row["pose"] is not None else None
            out.append({
                "frame": int(row["frame"]),
                "subset": row["subset"],
                "estimate": PoseEstimate(pose, float(row["score"]), int(row["inlier_count"]),
                                         row["status"], list(row["views_used"])),
            })
    if not out:
        raise EmptyInput(f"estimates file {path} has no rows")
    return out


def write_error_records_csv(path, records):
    with open(path, "w", newline="") as f:
        f.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(f)
        w.writerow(["frame", "config", "dt_mm", "rot_deg", "add_mm",
                    "axis_x_mm", "axis_y_mm", "axis_z_mm", "status"])
        for r in records:
            ax = np.asarray(r.axis_mm, dtype=float).reshape(3)
            w.writerow([r.frame, r.config, repr(float(r.dt_mm)), repr(float(r.rot_deg)),
                        repr(float(r.add_mm)), repr(float(ax[0])), repr(float(ax[1])),
                        repr(float(ax[2])), r.status])


def write_recall_csv(path, curve):
    with open(path, "w", newline="") as f:
        f.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(f)
        w.writerow(["threshold", "recall"])
        for th, rc in curve.rows():
            w.writerow([repr(float(th)), repr(float(rc))])


def write_ablation_json(path, report):
    obj = {"schema_version": SCHEMA_VERSION}
    obj.update(report.to_dict())
    _dump_json(path, obj)


def write_ablation_csv(path, report):
    header, body = report.csv_rows()
    with open(path, "w", newline="") as f:
        f.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(f)
        w.writerow(header)
        for row in body:
            w.writerow([
                row[0],
                *[v if isinstance(v, int) else repr(float(v)) for v in row[1:]],
            ])
