"""Pose-error metrics, recall curves, and camera-subset ablations.

Rotation errors are computed in radians and reported in degrees. Mean and
std rows aggregate successful frames only; failure rates are reported next
to them over all frames, and failed frames count against recall (a failed
frame is never recalled at any threshold).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownCamera
from .geometry import CameraModel, RigidTransform, geodesic_distance, quat_rotate
from .mvpose import MultiViewParams, ObjectModel, PoseEstimate, estimate_multi_view

_METRIC_FIELDS = {
    "dt": "dt_mm",
    "dt_mm": "dt_mm",
    "rot": "rot_deg",
    "rot_deg": "rot_deg",
    "add": "add_mm",
    "add_mm": "add_mm",
}


@dataclass
class PoseErrorRecord:
    frame: int
    config: str  # camera subset label, e.g. "OL+OR+C"
    dt_mm: float
    rot_deg: float
    add_mm: float
    axis_mm: np.ndarray  # |t_est - t_truth| along the reference camera axes
    status: str

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "config": self.config,
            "dt_mm": float(self.dt_mm),
            "rot_deg": float(self.rot_deg),
            "add_mm": float(self.add_mm),
            "axis_mm": [float(v) for v in np.asarray(self.axis_mm).reshape(3)],
            "status": self.status,
        }


def failure_record(frame: int, config: str, status: str) -> PoseErrorRecord:
    return PoseErrorRecord(frame, config, np.nan, np.nan, np.nan, np.full(3, np.nan), status)


def pose_errors(est: PoseEstimate, truth: RigidTransform, model: ObjectModel,
                ref_cam: CameraModel, frame: int = 0, config: str = "") -> PoseErrorRecord:
    """Error record of one successful estimate against the true pose.

    Both poses must live in the same frame (model to world, or model to
    camera); per-axis errors are the translation difference rotated into
    ref_cam's axes, so a camera-frame pair wants an identity-extrinsics
    reference. The vertex error averages displacement over the model's
    mesh vertices (surface points when no mesh is attached).
    """
    if est.status != "ok":
        raise ValueError("pose_errors needs a successful estimate")
    dt_vec = est.pose.t - truth.t
    dt = float(np.linalg.norm(dt_vec))
    rot = float(np.degrees(geodesic_distance(est.pose.q, truth.q)))
    verts = model.mesh_vertices if model.mesh_vertices is not None else model.surface_points
    add = float(np.linalg.norm(est.pose.apply(verts) - truth.apply(verts), axis=1).mean())
    axis = np.abs(quat_rotate(ref_cam.extrinsics.q, dt_vec))
    return PoseErrorRecord(frame, config, dt, rot, add, axis, "ok")


@dataclass
class RecallCurve:
    thresholds: np.ndarray
    recall: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thresholds, dtype=float).reshape(-1)
        rc = np.asarray(self.recall, dtype=float).reshape(-1)
        if len(th) != len(rc):
            raise ValueError("thresholds and recall lengths differ")
        if np.any(np.diff(th) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if np.any((rc < 0) | (rc > 1)) or np.any(np.diff(rc) < 0):
            raise ValueError("recall must be non-decreasing within [0, 1]")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "recall", rc)

    def rows(self):
        return list(zip(self.thresholds.tolist(), self.recall.tolist()))


def recall_curve(records, metric="dt", thresholds=None) -> RecallCurve:
    """Fraction of all records (failures included) within each threshold.

    metric selects the record field: "dt" (mm), "rot" (deg), or "add" (mm).
    """
    records = list(records)
    if not records:
        raise ValueError("recall_curve needs at least one record")
    field = _METRIC_FIELDS.get(metric)
    if field is None:
        raise ValueError(f"unknown metric '{metric}'")
    values = np.array(
        [getattr(r, field) if r.ok else np.inf for r in records], dtype=float
    )
    values = np.where(np.isnan(values), np.inf, values)
    if thresholds is None:
        finite = values[np.isfinite(values)]
        top = float(finite.max()) if len(finite) else 1.0
        thresholds = np.linspace(0.0, max(top, 1e-6), 50)[1:]
    th = np.asarray(thresholds, dtype=float).reshape(-1)
    rec = (values[None, :] <= th[:, None]).mean(axis=1)
    return RecallCurve(th, rec)


@dataclass
class AblationRow:
    config: str
    n_frames: int
    n_failed: int
    failure_rate: float
    dt_mean: float
    dt_std: float
    rot_mean: float
    rot_std: float
    add_mean: float
    add_std: float

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_frames": self.n_frames,
            "n_failed": self.n_failed,
            "failure_rate": self.failure_rate,
            "dt_mean_mm": self.dt_mean,
            "dt_std_mm": self.dt_std,
            "rot_mean_deg": self.rot_mean,
            "rot_std_deg": self.rot_std,
            "add_mean_mm": self.add_mean,
            "add_std_mm": self.add_std,
        }


@dataclass
class AblationReport:
    rows: list  # AblationRow per subset, input order
    records: list  # every PoseErrorRecord, failures included

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}

    def csv_rows(self):
        header = [
            "config", "n_frames", "n_failed", "failure_rate",
            "dt_mean_mm", "dt_std_mm", "rot_mean_deg", "rot_std_deg",
            "add_mean_mm", "add_std_mm",
        ]
        body = [
            [
                r.config, r.n_frames, r.n_failed, r.failure_rate,
                r.dt_mean, r.dt_std, r.rot_mean, r.rot_std, r.add_mean, r.add_std,
            ]
            for r in self.rows
        ]
        return header, body


def _subset_label(ids) -> str:
    return "+".join(ids)


def aggregate_records(records, config: str) -> AblationRow:
    """One table row from finished records (means over successes only)."""
    records = list(records)
    ok = [r for r in records if r.ok]
    n = len(records)
    nf = n - len(ok)
    dt = np.array([r.dt_mm for r in ok])
    rot = np.array([r.rot_deg for r in ok])
    add = np.array([r.add_mm for r in ok])
    return AblationRow(
        config=config,
        n_frames=n,
        n_failed=nf,
        failure_rate=nf / n if n else 0.0,
        dt_mean=float(dt.mean()) if len(ok) else float("nan"),
        dt_std=float(dt.std()) if len(ok) else float("nan"),
        rot_mean=float(rot.mean()) if len(ok) else float("nan"),
        rot_std=float(rot.std()) if len(ok) else float("nan"),
        add_mean=float(add.mean()) if len(ok) else float("nan"),
        add_std=float(add.std()) if len(ok) else float("nan"),
    )


def ablation_report(frames, cameras, truth_poses, model: ObjectModel, subsets,
                    params: MultiViewParams | None = None,
                    ref_cam: CameraModel | None = None) -> AblationReport:
    """Run the multi-view estimator per camera subset and aggregate errors.

    frames: per frame, dict camera_id -> CorrespondenceDistribution.
    cameras: dict camera_id -> CameraModel, or one such dict per frame when
    some cameras move. truth_poses aligns with frames (object to world).
    Subsets are id lists; each needs >= 2 cameras, all of which must exist.
    Mean/std rows cover successful frames; failure_rate covers all.
    """
    params = params or MultiViewParams()
    if len(frames) != len(truth_poses):
        raise ValueError("frames and truth_poses must align")
    static = isinstance(cameras, dict)

    def cams_at(idx):
        return cameras if static else cameras[idx]

    known = set(cams_at(0))
    labels = []
    for subset in subsets:
        if len(subset) < 2:
            raise ValueError("ablation subsets need at least 2 cameras")
        for cid in subset:
            if cid not in known:
                raise UnknownCamera(f"subset references unknown camera '{cid}'")
        labels.append(_subset_label(subset))

    records = []
    rows = []
    for subset, label in zip(subsets, labels):
        subset_records = []
        for i, per_view in enumerate(frames):
            cams = cams_at(i)
            missing = [cid for cid in subset if cid not in per_view]
            if missing:
                raise UnknownCamera(f"frame {i} lacks views {missing}")
            dists = [per_view[cid] for cid in subset]
            cam_list = [cams[cid] for cid in subset]
            est = estimate_multi_view(dists, cam_list, params, model)
            if est.status == "ok":
                ref = ref_cam if ref_cam is not None else cam_list[0]
                rec = pose_errors(est, truth_poses[i], model, ref, frame=i, config=label)
            else:
                rec = failure_record(i, label, est.status)
            subset_records.append(rec)
        rows.append(aggregate_records(subset_records, label))
        records.extend(subset_records)
    return AblationReport(rows=rows, records=records)
