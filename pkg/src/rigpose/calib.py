"""Joint spatial-temporal calibration of cameras against a reference tracker.

Each camera observes checkerboard corners of a moving board whose pose in
the world (tracker) frame is known as a timestamped track. World time is
camera time plus the camera's clock offset. The solver recovers camera
extrinsics and the offset jointly: a coarse grid over the offset with a
robust PnP fit per candidate, then a damped Gauss-Newton refinement over
the combined 7-parameter vector (6 pose + offset).

The offset objective is the theta-clipped mean reprojection error over
valid residuals; residuals whose shifted timestamp falls outside the track
span or inside a gap longer than max_track_gap are dropped, not clamped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    Degenerate,
    LowIdentifiability,
    NoOverlap,
    NotEnoughInliers,
    UnknownCamera,
)
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    compose,
    perturb,
    project_points,
    quat_rotate,
)
from .robust import (
    Correspondences2D3D,
    RansacParams,
    _lm,
    _pose_point_jacobian,
    _projection_jacobian,
    ransac_pnp,
    refine_pose_reprojection,
)
from .trajectory import CalibrationBoard, CornerObservationSequence, PoseTrack


@dataclass(frozen=True)
class SyncSolveConfig:
    """Settings for the offset search and the robust pose fit.

    grid_subsample and grid_max_iterations bound the work done per grid
    candidate; the winning offset is re-solved with the full budget.
    """

    offset_search_range: float = 0.5
    offset_grid_step: float = 0.005
    ransac: RansacParams = field(default_factory=lambda: RansacParams(inlier_threshold=2.0))
    max_track_gap: float = 0.25
    grid_subsample: int = 800
    grid_max_iterations: int = 12
    min_valid_residuals: int = 50

    def __post_init__(self):
        if self.offset_grid_step <= 0:
            raise ValueError("offset_grid_step must be positive")
        if self.offset_search_range <= 0:
            raise ValueError("offset_search_range must be positive")

    def offsets(self) -> np.ndarray:
        half = int(round(self.offset_search_range / self.offset_grid_step))
        return np.arange(-half, half + 1) * self.offset_grid_step


@dataclass
class StaticCalibResult:
    extrinsics: RigidTransform
    clock_offset: float
    inlier_ratio: float
    mean_reproj_error: float  # px, over inliers
    residual_count: int = 0
    camera_id: str | None = None


@dataclass
class MobileSyncResult:
    clock_offset: float
    mean_reproj_error: float  # px, clipped mean at the solution
    residual_count: int


@dataclass
class RigCalibration:
    results: dict  # camera_id -> StaticCalibResult
    failures: dict  # camera_id -> error message
    group_offsets: dict  # group name -> offset of the group's reference camera
    mobile: dict = field(default_factory=dict)  # camera_id -> MobileSyncResult


def _world_points(track: PoseTrack, times: np.ndarray, board_pts: np.ndarray) -> np.ndarray:
    q, p = track.sample(times)
    return quat_rotate(q, board_pts) + p


def _grid_subsample(valid_idx: np.ndarray, k: int) -> np.ndarray:
    if len(valid_idx) <= k:
        return valid_idx
    return valid_idx[np.unique(np.linspace(0, len(valid_idx) - 1, k).astype(int))]


def _clipped_mean(residuals: np.ndarray, theta: float) -> float:
    return float(np.minimum(residuals, theta).mean())


def _reproj_norms(pose: RigidTransform, world: np.ndarray, pixels: np.ndarray,
                  intr: CameraIntrinsics) -> np.ndarray:
    cam = pose.apply(world)
    px, ok = project_points(intr, cam)
    return np.where(ok, np.linalg.norm(np.where(ok[:, None], px - pixels, 0.0), axis=1), np.inf)


def _grid_search(times, pixels, board_pts, track, intr, cfg, objective_fn):
    """Shared offset grid scan; returns (best offset, per-offset objectives).

    objective_fn(world, px_sub) -> clipped-mean objective for one candidate.
    Raises NoOverlap when no candidate has enough valid residuals and
    LowIdentifiability when the objective is flat across the grid.
    """
    offsets = cfg.offsets()
    objectives = np.full(len(offsets), np.inf)
    any_valid = False
    for k, delta in enumerate(offsets):
        shifted = times + delta
        valid = track.valid_mask(shifted, cfg.max_track_gap)
        nv = int(valid.sum())
        if nv < cfg.min_valid_residuals:
            continue
        any_valid = True
        idx = _grid_subsample(np.flatnonzero(valid), cfg.grid_subsample)
        world = _world_points(track, times[idx] + delta, board_pts[idx])
        objectives[k] = objective_fn(world, pixels[idx])
    if not any_valid:
        raise NoOverlap("no candidate offset leaves enough in-span residuals")
    finite = np.isfinite(objectives)
    omin = objectives[finite].min()
    omax = objectives[finite].max()
    # absolute floor keeps the relative test meaningful when omin is at
    # floating-point noise (exactly reproducible stationary scenes)
    if omax <= max(1.05 * omin, omin + 1e-6):
        raise LowIdentifiability(
            "offset objective is flat across the search grid (board too static?)",
            offsets=offsets,
            objectives=objectives,
        )
    # ties resolved toward the smaller |offset|
    order = np.lexsort((offsets, np.abs(offsets), objectives))
    return float(offsets[order[0]]), objectives


def calibrate_static_camera(
    obs: CornerObservationSequence,
    board_track: PoseTrack,
    board: CalibrationBoard,
    intr: CameraIntrinsics,
    cfg: SyncSolveConfig,
) -> StaticCalibResult:
    """Jointly recover a static camera's extrinsics and clock offset.

    Grid search over the offset (robust PnP per candidate, theta-clipped
    mean objective), then a joint 7-parameter Gauss-Newton refinement on
    the winning candidate's inlier set. The offset Jacobian column is a
    central difference (1 ms) through the interpolated board motion.
    """
    times, ids, pixels = obs.flatten()
    board_pts = board.points[ids]
    theta = cfg.ransac.inlier_threshold
    # scan params: capped iterations, no local optimization; the winning
    # candidate is re-solved with the full budget afterwards
    grid_params = RansacParams(
        inlier_threshold=theta,
        confidence=cfg.ransac.confidence,
        max_iterations=min(cfg.ransac.max_iterations, cfg.grid_max_iterations),
        local_opt_rounds=0,
        seed=cfg.ransac.seed,
    )

    def objective(world, px):
        """Mean inlier reprojection error; theta when the fit fails or the
        inlier set is too thin to mean anything (< 5% of residuals)."""
        try:
            res = ransac_pnp(Correspondences2D3D(px, world), intr, grid_params)
        except (NotEnoughInliers, Degenerate):
            return theta
        r = _reproj_norms(res.pose, world, px, intr)
        inl = r <= theta
        if inl.mean() < 0.05:
            return theta
        return float(r[inl].mean())

    best_delta, _ = _grid_search(times, pixels, board_pts, board_track, intr, cfg, objective)

    # full-budget solve at the winning offset
    valid = board_track.valid_mask(times + best_delta, cfg.max_track_gap)
    world = _world_points(board_track, times[valid] + best_delta, board_pts[valid])
    full = ransac_pnp(Correspondences2D3D(pixels[valid], world), intr, cfg.ransac)

    # joint pose + offset refinement on the inlier set
    inl = np.flatnonzero(valid)[full.inlier_mask]
    t_inl = times[inl]
    X_inl = board_pts[inl]
    px_inl = pixels[inl]
    h = 1e-3

    def residual(pose, delta, t_sel, X_sel, px_sel):
        world = _world_points(board_track, t_sel + delta, X_sel)
        cam = pose.apply(world)
        px, ok = project_points(intr, cam)
        r = px - px_sel
        r[~ok] = 1e9
        return r.reshape(-1), world, cam, ok

    def res_jac(state):
        pose, delta = state
        vm = board_track.valid_mask(t_inl + delta, cfg.max_track_gap)
        vm &= board_track.valid_mask(t_inl + delta - h, cfg.max_track_gap)
        vm &= board_track.valid_mask(t_inl + delta + h, cfg.max_track_gap)
        t_sel, X_sel, px_sel = t_inl[vm], X_inl[vm], px_inl[vm]
        if len(t_sel) == 0:
            return np.zeros(0), np.zeros((0, 7))
        r, world, cam, ok = residual(pose, delta, t_sel, X_sel, px_sel)
        J = np.zeros((len(t_sel), 2, 7))
        if np.any(ok):
            Jproj = _projection_jacobian(intr, cam[ok])
            Jpose = _pose_point_jacobian(pose, world[ok])
            J[ok, :, :6] = Jproj @ Jpose
        rp, _, _, _ = residual(pose, delta + h, t_sel, X_sel, px_sel)
        rm, _, _, _ = residual(pose, delta - h, t_sel, X_sel, px_sel)
        J[:, :, 6] = ((rp - rm) / (2.0 * h)).reshape(-1, 2)
        return r, J.reshape(-1, 7)

    def apply_step(state, step):
        pose, delta = state
        return (perturb(pose, step[:6]), delta + float(step[6]))

    (pose, delta), _, _, _ = _lm((full.pose, best_delta), res_jac, apply_step,
                                 max_iterations=100, step_tol=1e-10)

    final_valid = board_track.valid_mask(times + delta, cfg.max_track_gap)
    world = _world_points(board_track, times[final_valid] + delta, board_pts[final_valid])
    r = _reproj_norms(pose, world, pixels[final_valid], intr)
    inliers = r <= theta
    mean_err = float(r[inliers].mean()) if np.any(inliers) else float("inf")
    return StaticCalibResult(
        extrinsics=pose,
        clock_offset=float(delta),
        inlier_ratio=float(inliers.mean()),
        mean_reproj_error=mean_err,
        residual_count=int(final_valid.sum()),
        camera_id=obs.camera_id,
    )


def solve_extrinsics_fixed_offset(
    obs: CornerObservationSequence,
    board_track: PoseTrack,
    board: CalibrationBoard,
    intr: CameraIntrinsics,
    cfg: SyncSolveConfig,
    clock_offset: float,
) -> StaticCalibResult:
    """Extrinsics-only solve for a camera whose offset is already known
    (hardware-synchronized group member)."""
    times, ids, pixels = obs.flatten()
    board_pts = board.points[ids]
    theta = cfg.ransac.inlier_threshold
    valid = board_track.valid_mask(times + clock_offset, cfg.max_track_gap)
    if valid.sum() < cfg.min_valid_residuals:
        raise NoOverlap("not enough in-span residuals at the group offset")
    world = _world_points(board_track, times[valid] + clock_offset, board_pts[valid])
    corr = Correspondences2D3D(pixels[valid], world)
    full = ransac_pnp(corr, intr, cfg.ransac)
    pose = full.pose
    if full.inlier_count >= 4:
        pose = refine_pose_reprojection(pose, corr.subset(full.inlier_mask), intr).pose
    r = _reproj_norms(pose, world, pixels[valid], intr)
    inliers = r <= theta
    mean_err = float(r[inliers].mean()) if np.any(inliers) else float("inf")
    return StaticCalibResult(
        extrinsics=pose,
        clock_offset=float(clock_offset),
        inlier_ratio=float(inliers.mean()),
        mean_reproj_error=mean_err,
        residual_count=int(valid.sum()),
        camera_id=obs.camera_id,
    )


def estimate_mobile_offset(
    obs: CornerObservationSequence,
    board_track: PoseTrack,
    hmd_track: PoseTrack,
    hand_eye: RigidTransform,
    board: CalibrationBoard,
    intr: CameraIntrinsics,
    cfg: SyncSolveConfig,
) -> MobileSyncResult:
    """Clock offset of a tracked mobile camera against the board track.

    The camera rides a tracked device: its pose at world time t is the
    hand-eye transform composed with the inverse of the device track. Only
    the offset is unknown; the clipped-mean reprojection objective is grid
    scanned, then polished by golden-section search to 0.05 ms.
    """
    times, ids, pixels = obs.flatten()
    board_pts = board.points[ids]
    theta = cfg.ransac.inlier_threshold

    def objective_at(delta: float) -> float:
        shifted = times + delta
        valid = hmd_track.valid_mask(shifted, cfg.max_track_gap)
        valid &= board_track.valid_mask(shifted, cfg.max_track_gap)
        nv = int(valid.sum())
        if nv < cfg.min_valid_residuals:
            return np.inf
        ts = shifted[valid]
        world = _world_points(board_track, ts, board_pts[valid])
        qh, ph = hmd_track.sample(ts)
        # into the device frame, then through the hand-eye to the camera
        local = quat_rotate(np.concatenate([qh[:, :1], -qh[:, 1:]], axis=1), world - ph)
        cam = hand_eye.apply(local)
        px, ok = project_points(intr, cam)
        r = np.where(ok, np.linalg.norm(np.where(ok[:, None], px - pixels[valid], 0.0), axis=1), np.inf)
        return _clipped_mean(r, theta)

    offsets = cfg.offsets()
    objectives = np.array([objective_at(d) for d in offsets])
    if not np.any(np.isfinite(objectives)):
        raise NoOverlap("no candidate offset leaves enough in-span residuals")
    finite = np.isfinite(objectives)
    omin, omax = objectives[finite].min(), objectives[finite].max()
    if omax <= max(1.05 * omin, omin + 1e-6):
        raise LowIdentifiability(
            "offset objective is flat across the search grid (board too static?)",
            offsets=offsets,
            objectives=objectives,
        )
    order = np.lexsort((offsets, np.abs(offsets), objectives))
    best = float(offsets[order[0]])

    # golden-section polish inside the bracketing grid cells
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    a = best - cfg.offset_grid_step
    b = best + cfg.offset_grid_step
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = objective_at(c), objective_at(d)
    while (b - a) > 5e-5:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = objective_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = objective_at(d)
    delta = 0.5 * (a + b)
    obj = objective_at(delta)
    if not np.isfinite(obj) or obj > min(fc, fd):
        delta = c if fc <= fd else d
        obj = min(fc, fd)

    shifted = times + delta
    valid = hmd_track.valid_mask(shifted, cfg.max_track_gap) & board_track.valid_mask(
        shifted, cfg.max_track_gap
    )
    return MobileSyncResult(
        clock_offset=float(delta),
        mean_reproj_error=float(obj),
        residual_count=int(valid.sum()),
    )


def calibrate_rig(
    observations: dict,
    board_track: PoseTrack,
    board: CalibrationBoard,
    intrinsics: dict,
    cfg: SyncSolveConfig,
    sync_groups: dict | None = None,
) -> RigCalibration:
    """Calibrate every camera, sharing clock offsets inside sync groups.

    Each group's first listed camera is solved with a free offset; the
    remaining members reuse that offset and solve extrinsics only. Cameras
    not named in any group form their own singleton groups. A group fails
    as a whole only when its reference camera fails.
    """
    ids = sorted(observations)
    for cid in ids:
        if cid not in intrinsics:
            raise UnknownCamera(f"no intrinsics for camera '{cid}'")
    groups = dict(sync_groups) if sync_groups else {}
    seen = {}
    for g, members in groups.items():
        if not members:
            raise ConfigError(f"sync group '{g}' is empty")
        for cid in members:
            if cid not in observations:
                raise UnknownCamera(f"sync group '{g}' names unknown camera '{cid}'")
            if cid in seen:
                raise ConfigError(f"camera '{cid}' appears in groups '{seen[cid]}' and '{g}'")
            seen[cid] = g
    for cid in ids:
        if cid not in seen:
            groups[cid] = [cid]

    results = {}
    failures = {}
    group_offsets = {}
    for g in sorted(groups):
        members = groups[g]
        ref = members[0]
        try:
            ref_result = calibrate_static_camera(
                observations[ref], board_track, board, intrinsics[ref], cfg
            )
        except Exception as exc:  # noqa: BLE001 - group fails as a unit
            for cid in members:
                failures[cid] = f"reference '{ref}' failed: {exc}"
            continue
        results[ref] = ref_result
        group_offsets[g] = ref_result.clock_offset
        for cid in members[1:]:
            try:
                results[cid] = solve_extrinsics_fixed_offset(
                    observations[cid], board_track, board, intrinsics[cid], cfg,
                    ref_result.clock_offset,
                )
            except Exception as exc:  # noqa: BLE001
                failures[cid] = str(exc)
    return RigCalibration(results=results, failures=failures, group_offsets=group_offsets)


@dataclass
class CameraReport:
    mean_reproj_px: float
    p50_reproj_px: float
    p90_reproj_px: float
    mean_position_mm: float
    axis_mm: dict  # {"x":, "y":, "z":} mean absolute error along camera axes
    n_residuals: int
    n_frames: int


@dataclass
class CalibReport:
    """Held-out-frame quality report.

    For context: a well-calibrated rig at roughly 1 m working distance
    lands near 1.8 px mean reprojection error, about 2.5 mm of 3D position
    error, and the depth (Z) axis dominating the X/Y components by roughly
    a factor of two. Those magnitudes are not asserted anywhere; the depth
    dominance ordering is.
    """

    per_camera: dict  # camera_id -> CameraReport
    mean_reproj_px: float
    mean_position_mm: float

    def to_dict(self) -> dict:
        return {
            "mean_reproj_px": self.mean_reproj_px,
            "mean_position_mm": self.mean_position_mm,
            "per_camera": {
                cid: {
                    "mean_reproj_px": r.mean_reproj_px,
                    "p50_reproj_px": r.p50_reproj_px,
                    "p90_reproj_px": r.p90_reproj_px,
                    "mean_position_mm": r.mean_position_mm,
                    "axis_mm": dict(r.axis_mm),
                    "n_residuals": r.n_residuals,
                    "n_frames": r.n_frames,
                }
                for cid, r in sorted(self.per_camera.items())
            },
        }


def evaluate_calibration(
    results: dict,
    holdout: dict,
    board_track: PoseTrack,
    board: CalibrationBoard,
    intrinsics: dict,
    max_track_gap: float | None = None,
) -> CalibReport:
    """Score calibration on held-out frames.

    Reprojection error compares held-out corners against the solved chain
    (extrinsics plus interpolated board pose at the solved offset). The 3D
    position error compares, per frame, board corner positions from a
    camera-only pose fit of that frame's corners against positions from
    the solved chain, expressed in the camera frame; its per-axis means
    expose the depth-axis weakness of single-camera fits.
    """
    per_camera = {}
    all_reproj = []
    all_pos = []
    for cid in sorted(results):
        if cid not in holdout:
            continue
        res = results[cid]
        intr = intrinsics[cid]
        reproj = []
        pos = []
        axis = []
        n_frames = 0
        for frame in holdout[cid].frames:
            t = frame.timestamp + res.clock_offset
            if not board_track.valid_mask(np.array([t]), max_track_gap)[0]:
                continue
            qb, pb = board_track.sample(float(t))
            board_pose = RigidTransform(qb, pb)
            chain = compose(res.extrinsics, board_pose)
            X = board.points[frame.point_ids]
            cam_chain = chain.apply(X)
            px, ok = project_points(intr, cam_chain)
            if not np.all(ok):
                continue
            reproj.append(np.linalg.norm(px - frame.pixels, axis=1))
            if len(frame) < 4:
                continue
            try:
                det = refine_pose_reprojection(
                    chain, Correspondences2D3D(frame.pixels, X), intr
                ).pose
            except (ValueError, np.linalg.LinAlgError):
                continue
            diff = det.apply(X) - cam_chain
            pos.append(np.linalg.norm(diff, axis=1))
            axis.append(np.abs(diff))
            n_frames += 1
        if not reproj:
            continue
        rp = np.concatenate(reproj)
        pm = np.concatenate(pos) if pos else np.zeros(0)
        ax = np.concatenate(axis) if axis else np.zeros((0, 3))
        per_camera[cid] = CameraReport(
            mean_reproj_px=float(rp.mean()),
            p50_reproj_px=float(np.percentile(rp, 50)),
            p90_reproj_px=float(np.percentile(rp, 90)),
            mean_position_mm=float(pm.mean()) if len(pm) else float("nan"),
            axis_mm={
                "x": float(ax[:, 0].mean()) if len(ax) else float("nan"),
                "y": float(ax[:, 1].mean()) if len(ax) else float("nan"),
                "z": float(ax[:, 2].mean()) if len(ax) else float("nan"),
            },
            n_residuals=len(rp),
            n_frames=n_frames,
        )
        all_reproj.append(rp)
        if len(pm):
            all_pos.append(pm)
    mean_reproj = float(np.concatenate(all_reproj).mean()) if all_reproj else float("nan")
    mean_pos = float(np.concatenate(all_pos).mean()) if all_pos else float("nan")
    return CalibReport(per_camera=per_camera, mean_reproj_px=mean_reproj, mean_position_mm=mean_pos)
