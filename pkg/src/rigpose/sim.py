"""Synthetic rig, trajectory, and observation generator.

Everything is reproducible from one 64-bit seed: trajectory generation
draws from a Philox stream keyed by seed XOR 0x0F0F0F0F, and each object
frame draws from its own stream keyed by seed XOR (2^32 + frame index), so
frames can be generated independently and in parallel.

Clock convention: world (tracker) time = camera time + clock offset. The
injected per-camera offsets therefore shift emitted timestamps by
t_cam = t_world - offset. Emitted corner and correspondence data, with
noise and outliers disabled, reprojects through the ground-truth chain
exactly (the board and object positions the cameras see are produced by
interpolating the emitted tracks, not a hidden continuous path).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .geometry import (
    CameraIntrinsics,
    CameraModel,
    RigidTransform,
    compose,
    invert,
    project_points,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
)
from .mvpose import CorrespondenceDistribution, ObjectModel, rasterize_silhouette
from .trajectory import CalibrationBoard, CornerFrame, CornerObservationSequence, PoseTrack

PERIMETER_IDS = ["OL", "OR", "L", "R"]
PERIMETER_ANGLES_DEG = {"OL": 135.0, "OR": 45.0, "L": 225.0, "R": 315.0}
HMD_IDS = ["S", "A"]
HMD_ANGLES_DEG = {"S": 90.0, "A": 270.0}


@dataclass(frozen=True)
class RigSpec:
    perimeter_cameras: int = 4
    perimeter_radius_mm: float = 1200.0
    perimeter_height_mm: float = 800.0
    perimeter_fov_deg: float = 90.0
    ceiling_camera: bool = True
    ceiling_height_mm: float = 1500.0
    hmd_cameras: int = 0
    hmd_fov_deg: float = 50.0
    hmd_standoff_mm: float = 650.0
    hmd_height_mm: float = 450.0
    image_width: int = 1280
    image_height: int = 960
    clock_offsets_s: dict = field(default_factory=dict)
    sync_groups: dict = field(default_factory=dict)

    def __post_init__(self):
        total = self.perimeter_cameras + int(self.ceiling_camera) + self.hmd_cameras
        if total < 1:
            raise ValueError("rig needs at least one camera")
        if self.perimeter_cameras < 0 or self.hmd_cameras < 0 or self.hmd_cameras > 2:
            raise ValueError("camera counts out of range (0-2 hmd cameras supported)")
        for fov in (self.perimeter_fov_deg, self.hmd_fov_deg):
            if not (10.0 < fov < 170.0):
                raise ValueError(f"field of view {fov} outside (10, 170) degrees")

    def camera_ids(self) -> list:
        ids = []
        if self.perimeter_cameras <= 4:
            ids += PERIMETER_IDS[: self.perimeter_cameras]
        else:
            ids += PERIMETER_IDS + [f"P{k}" for k in range(4, self.perimeter_cameras)]
        if self.ceiling_camera:
            ids.append("C")
        ids += HMD_IDS[: self.hmd_cameras]
        return ids

    def hmd_ids(self) -> list:
        return HMD_IDS[: self.hmd_cameras]


@dataclass(frozen=True)
class SceneSpec:
    duration_s: float = 60.0
    rate_hz: float = 30.0
    tracker_rate_hz: float = 120.0
    speed_mps: float = 0.3
    smoothness_s: float = 0.4
    corner_noise_px: float = 0.0
    corner_outlier_fraction: float = 0.0
    correspondence_noise_px: float = 0.0
    outlier_fraction: float = 0.0
    occlusion_fraction: float = 0.0
    truncation_fraction: float = 0.0
    depth_noise_mm: float = 0.0
    depth_invalid_fraction: float = 0.0
    distance_range_mm: tuple = (400.0, 1700.0)
    object_region_half_mm: float = 140.0
    board_region_half_mm: float = 300.0
    n_frames: int = 200
    depth_views: tuple = ()
    seed: int = 0

    def __post_init__(self):
        for name in (
            "corner_outlier_fraction",
            "outlier_fraction",
            "occlusion_fraction",
            "truncation_fraction",
            "depth_invalid_fraction",
        ):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        lo, hi = self.distance_range_mm
        if not (400.0 <= lo < hi <= 1700.0):
            raise ValueError("distance_range_mm must satisfy 400 <= lo < hi <= 1700")
        if self.duration_s <= 0 or self.rate_hz <= 0 or self.tracker_rate_hz <= 0:
            raise ValueError("duration and rates must be positive")


def _path_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64((seed ^ 0x0F0F0F0F) & (2**64 - 1))))


def _frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    key = (seed ^ (2**32 + frame_index)) & (2**64 - 1)
    return np.random.Generator(np.random.Philox(key=np.uint64(key)))


def _pose_rng(seed: int, frame_index: int) -> np.random.Generator:
    key = (seed ^ (2**33 + frame_index)) & (2**64 - 1)
    return np.random.Generator(np.random.Philox(key=np.uint64(key)))


def _device_rng(seed: int, camera_id: str) -> np.random.Generator:
    # per-device stream so the board and object sequences share one track
    key = (seed ^ (2**34 + zlib.crc32(camera_id.encode()))) & (2**64 - 1)
    return np.random.Generator(np.random.Philox(key=np.uint64(key)))


def _device_span(scene: SceneSpec) -> float:
    object_span = scene.n_frames / scene.rate_hz if scene.rate_hz > 0 else 0.0
    return max(scene.duration_s, object_span)


def _look_at(center: np.ndarray, target: np.ndarray) -> RigidTransform:
    """World-to-camera transform for a camera at center with +z toward target."""
    z = target - center
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    if abs(z @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(up, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return RigidTransform.from_rotation_matrix(R, -R @ center)


def _fov_intrinsics(spec: RigSpec, fov_deg: float) -> CameraIntrinsics:
    f = (spec.image_width / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    return CameraIntrinsics(
        fx=f,
        fy=f,
        cx=spec.image_width / 2.0,
        cy=spec.image_height / 2.0,
        width=spec.image_width,
        height=spec.image_height,
    )


@dataclass
class RigTruth:
    extrinsics: dict  # camera_id -> RigidTransform (static cameras; nominal for hmd)
    clock_offsets: dict  # camera_id -> seconds
    hand_eye: dict  # hmd camera_id -> RigidTransform (device frame -> camera frame)
    sync_groups: dict


def make_rig(spec: RigSpec):
    """Cameras (with ground-truth extrinsics) and the matching truth record.

    Perimeter cameras sit evenly on a circle looking at the origin, the
    ceiling camera looks straight down, and HMD cameras hover near the
    working area with a narrow field of view; their actual motion is
    produced per scene.
    """
    cameras = []
    extr = {}
    hand_eye = {}
    ids = spec.camera_ids()
    offsets = {cid: float(spec.clock_offsets_s.get(cid, 0.0)) for cid in ids}
    origin = np.zeros(3)
    for cid in ids:
        if cid in PERIMETER_ANGLES_DEG or cid.startswith("P"):
            if cid in PERIMETER_ANGLES_DEG:
                ang = np.radians(PERIMETER_ANGLES_DEG[cid])
            else:
                k = int(cid[1:])
                ang = np.radians(360.0 * k / spec.perimeter_cameras)
            center = np.array(
                [
                    spec.perimeter_radius_mm * np.cos(ang),
                    spec.perimeter_radius_mm * np.sin(ang),
                    spec.perimeter_height_mm,
                ]
            )
            intr = _fov_intrinsics(spec, spec.perimeter_fov_deg)
        elif cid == "C":
            center = np.array([0.0, 0.0, spec.ceiling_height_mm])
            intr = _fov_intrinsics(spec, spec.perimeter_fov_deg)
        else:  # hmd
            ang = np.radians(HMD_ANGLES_DEG[cid])
            center = np.array(
                [
                    spec.hmd_standoff_mm * np.cos(ang),
                    spec.hmd_standoff_mm * np.sin(ang),
                    spec.hmd_height_mm,
                ]
            )
            intr = _fov_intrinsics(spec, spec.hmd_fov_deg)
            hand_eye[cid] = RigidTransform.from_rotvec(
                np.array([0.02, -0.03, 0.01]), np.array([15.0, -8.0, 22.0])
            )
        pose = _look_at(center, origin)
        extr[cid] = pose
        group = None
        for g, members in spec.sync_groups.items():
            if cid in members:
                group = g
        cameras.append(
            CameraModel(
                id=cid,
                intrinsics=intr,
                extrinsics=pose,
                clock_offset=offsets[cid],
                sync_group=group,
            )
        )
    truth = RigTruth(
        extrinsics=extr,
        clock_offsets=offsets,
        hand_eye=hand_eye,
        sync_groups=dict(spec.sync_groups),
    )
    return cameras, truth


def _smooth_positions(rng, n_dense, region_center, region_half, window):
    """Low-pass filtered random waypoints, upsampled to n_dense samples."""
    n_way = max(4, n_dense // 40)
    way = rng.uniform(-1.0, 1.0, (n_way, 3)) * region_half + region_center
    t_way = np.linspace(0.0, 1.0, n_way)
    t_dense = np.linspace(0.0, 1.0, n_dense)
    dense = np.column_stack([np.interp(t_dense, t_way, way[:, k]) for k in range(3)])
    return uniform_filter1d(dense, size=max(3, window), axis=0, mode="nearest")


def _smooth_quats(rng, n_dense, window, wobble_rad=0.25):
    """Slowly wobbling orientation: smoothed random rotation-vector curve."""
    n_way = max(4, n_dense // 60)
    way = rng.normal(0.0, wobble_rad, (n_way, 3))
    t_way = np.linspace(0.0, 1.0, n_way)
    t_dense = np.linspace(0.0, 1.0, n_dense)
    rv = np.column_stack([np.interp(t_dense, t_way, way[:, k]) for k in range(3)])
    rv = uniform_filter1d(rv, size=max(3, window), axis=0, mode="nearest")
    return quat_from_rotvec(rv)


def _constant_speed_track(rng, duration, tracker_rate, speed_mps, region_half,
                          smooth_window_s, frame_to, margin=0.6):
    """Board-style track: constant-speed smooth path with gentle wobble.

    Sampled at the tracker rate over [-margin, duration + margin] so that
    offset-shifted queries near the ends stay in span. speed 0 freezes the
    position (identifiability test case).
    """
    span = duration + 2.0 * margin
    n = int(np.ceil(span * tracker_rate)) + 1
    times = -margin + np.arange(n) / tracker_rate
    window = max(3, int(smooth_window_s * tracker_rate))
    if speed_mps <= 0:
        # fully frozen pose: the unobservable-offset test case
        pos0 = rng.uniform(-0.3, 0.3, 3) * region_half
        pos = np.tile(pos0, (n, 1))
        q0 = _smooth_quats(rng, 1, 3)[0]
        quats = np.tile(q0, (n, 1))
        return PoseTrack(times, quats, pos, frame_from=frame_to + "_body", frame_to="world")
    else:
        need_mm = speed_mps * 1000.0 * span
        # oversample a dense path until its arc length covers the need
        dense = _smooth_positions(rng, 8 * n, np.zeros(3), region_half, 8 * window)
        seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        while arc[-1] < need_mm:
            extra = _smooth_positions(rng, 8 * n, np.zeros(3), region_half, 8 * window)
            # splice continuously: shift the new block to start at the last point
            extra = extra - extra[0] + dense[-1]
            dense = np.vstack([dense, extra[1:]])
            seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
            arc = np.concatenate([[0.0], np.cumsum(seg)])
        s = (times - times[0]) * speed_mps * 1000.0
        pos = np.column_stack([np.interp(s, arc, dense[:, k]) for k in range(3)])
    quats = _smooth_quats(rng, n, window)
    return PoseTrack(times, quats, pos, frame_from=frame_to + "_body", frame_to="world")


def _hmd_track(rng, nominal_device_pose, duration, tracker_rate, smooth_window_s,
               margin=0.6, pos_sigma_mm=20.0, rot_sigma_rad=0.05):
    """Smoothed jitter around a nominal device pose (head motion stand-in)."""
    span = duration + 2.0 * margin
    n = int(np.ceil(span * tracker_rate)) + 1
    times = -margin + np.arange(n) / tracker_rate
    window = max(3, int(smooth_window_s * tracker_rate))
    dp = uniform_filter1d(rng.normal(0.0, pos_sigma_mm, (n, 3)), size=window, axis=0, mode="nearest")
    dp *= np.sqrt(window)  # keep the smoothed amplitude near pos_sigma
    rv = uniform_filter1d(rng.normal(0.0, rot_sigma_rad, (n, 3)), size=window, axis=0, mode="nearest")
    rv *= np.sqrt(window)
    quats = quat_normalize(quat_multiply(nominal_device_pose.q, quat_from_rotvec(rv)))
    pos = nominal_device_pose.t + dp
    return PoseTrack(times, quats, pos, frame_from="device", frame_to="world")


@dataclass
class BoardSimulation:
    board_track: PoseTrack  # board frame -> world, tracker clock
    observations: dict  # camera_id -> CornerObservationSequence (camera clocks)
    hmd_tracks: dict  # hmd camera_id -> PoseTrack (device -> world)
    frame_times: np.ndarray  # world-clock capture instants


def _camera_pose_at(cid, truth: RigTruth, hmd_tracks: dict, t_world: float) -> RigidTransform:
    if cid in hmd_tracks:
        q, p = hmd_tracks[cid].sample(float(t_world))
        return compose(truth.hand_eye[cid], invert(RigidTransform(q, p)))
    return truth.extrinsics[cid]


def simulate_board(rig, truth: RigTruth, board: CalibrationBoard, scene: SceneSpec) -> BoardSimulation:
    """Moving-board calibration sequence for every camera in the rig.

    Corner pixels are exact projections of the emitted track's interpolated
    poses (plus configured noise/outliers); timestamps are shifted into each
    camera's clock by its injected offset.
    """
    rng = _path_rng(scene.seed)
    track = _constant_speed_track(
        rng, scene.duration_s, scene.tracker_rate_hz, scene.speed_mps,
        scene.board_region_half_mm, scene.smoothness_s, "board",
    )
    hmd_tracks = {}
    cam_by_id = {c.id: c for c in rig}
    for cid in truth.hand_eye:
        nominal_device = compose(invert(truth.extrinsics[cid]), truth.hand_eye[cid])
        hmd_tracks[cid] = _hmd_track(
            _device_rng(scene.seed, cid), nominal_device, _device_span(scene),
            scene.tracker_rate_hz, scene.smoothness_s,
        )
    n_frames = int(scene.duration_s * scene.rate_hz)
    frame_times = np.arange(n_frames) / scene.rate_hz
    q_all, p_all = track.sample(frame_times)

    observations = {}
    for cid in sorted(cam_by_id):
        cam = cam_by_id[cid]
        delta = truth.clock_offsets[cid]
        frames = []
        for i, t in enumerate(frame_times):
            rng_f = _frame_rng(scene.seed, i)
            board_pose = RigidTransform(q_all[i], p_all[i])
            T = compose(_camera_pose_at(cid, truth, hmd_tracks, t), board_pose)
            pts_cam = T.apply(board.points)
            px, ok = project_points(cam.intrinsics, pts_cam)
            keep = ok & cam.intrinsics.contains(px)
            if scene.corner_noise_px > 0:
                px = px + rng_f.normal(0.0, scene.corner_noise_px, px.shape)
            if scene.corner_outlier_fraction > 0:
                out = rng_f.random(len(px)) < scene.corner_outlier_fraction
                px[out] = rng_f.uniform(
                    [0, 0], [cam.intrinsics.width, cam.intrinsics.height], (int(out.sum()), 2)
                )
            keep &= cam.intrinsics.contains(px)
            if keep.sum() == 0:
                continue
            ids = np.flatnonzero(keep)
            frames.append(CornerFrame(t - delta, ids, px[keep]))
        observations[cid] = CornerObservationSequence(cid, frames)
    return BoardSimulation(
        board_track=track,
        observations=observations,
        hmd_tracks=hmd_tracks,
        frame_times=frame_times,
    )


def make_object_model(seed: int = 0, n_points: int = 400, min_spacing_mm: float = 3.0,
                      radii=(80.0, 50.0, 30.0)) -> ObjectModel:
    """Bumpy ellipsoid point model with a minimum surface point spacing.

    Spacing above the cross-view matching tolerance keeps model points
    unambiguous when correspondence sets are matched across views.
    """
    rng = np.random.default_rng(seed)
    pts = []
    attempts = 0
    while len(pts) < n_points and attempts < 200 * n_points:
        attempts += 1
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        p = d * np.asarray(radii) * (1.0 + 0.15 * np.sin(5.0 * d[0]))
        if not pts or np.min(np.linalg.norm(np.asarray(pts) - p, axis=1)) >= min_spacing_mm:
            pts.append(p)
    pts = np.asarray(pts)
    mesh = rng.normal(size=(512, 3))
    mesh /= np.linalg.norm(mesh, axis=1, keepdims=True)
    mesh = mesh * np.asarray(radii) * (1.0 + 0.15 * np.sin(5.0 * mesh[:, 0]))[:, None]
    return ObjectModel("tool", pts, mesh_vertices=mesh)


@dataclass
class ObjectSimulation:
    truth_track: PoseTrack  # object frame -> world at the frame instants
    frames: list  # per frame: dict camera_id -> CorrespondenceDistribution
    depths: list  # per frame: dict camera_id -> depth raster (only depth_views)
    frame_times: np.ndarray  # world clock
    truth_poses: list  # per frame RigidTransform (object -> world)
    hmd_tracks: dict
    camera_poses: list  # per frame: dict camera_id -> RigidTransform (world -> camera)


def _sample_object_pose(rng, rig, scene: SceneSpec) -> RigidTransform:
    lo, hi = scene.distance_range_mm
    # camera centers in world; HMD nominal centers are good enough for gating
    cam_centers = [invert(c.extrinsics).t for c in rig]
    for _ in range(1000):
        pos = rng.uniform(-1.0, 1.0, 3) * scene.object_region_half_mm
        d = [np.linalg.norm(pos - c) for c in cam_centers]
        if min(d) >= lo and max(d) <= hi:
            q = rng.normal(size=4)
            return RigidTransform(q, pos)
    raise ValueError("could not sample an object pose inside the distance range")


def _zbuffer_visible(px, depth, cell_px=4.0, tol_mm=15.0):
    """Self-occlusion filter: keep points near the front of their pixel cell."""
    cells = np.floor(px / cell_px).astype(int)
    cells -= cells.min(axis=0)
    lin = cells[:, 0] + (cells[:, 1] * (cells[:, 0].max() + 1)).astype(int)
    order = np.argsort(lin, kind="stable")
    front = np.full(len(px), np.inf)
    lin_s = lin[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(lin_s)) + 1])
    mins = np.minimum.reduceat(depth[order], starts)
    for s, e, m in zip(starts, np.concatenate([starts[1:], [len(lin_s)]]), mins):
        front[order[s:e]] = m
    return depth <= front + tol_mm


def simulate_object(rig, truth: RigTruth, model: ObjectModel, scene: SceneSpec) -> ObjectSimulation:
    """Per-frame correspondence distributions (and optional depth rasters).

    Pose sampling is independent per frame when speed is 0, otherwise a
    smooth constant-speed track. Visibility is a point z-buffer; occlusion
    masks a contiguous angular sector of the projected points (depth pixels
    in the sector report a foreign surface in front of the object, while
    the emitted mask still covers the full silhouette); truncation clips
    the patch on narrow-view cameras. Outlier mass is uniform over (patch
    pixel, random model point) pairs.
    """
    ids = sorted(c.id for c in rig)
    cam_by_id = {c.id: c for c in rig}
    rng_path = _path_rng(scene.seed)
    n = scene.n_frames
    frame_times = np.arange(n) / scene.rate_hz

    hmd_tracks = {}
    for cid in truth.hand_eye:
        nominal_device = compose(invert(truth.extrinsics[cid]), truth.hand_eye[cid])
        hmd_tracks[cid] = _hmd_track(
            _device_rng(scene.seed, cid), nominal_device, _device_span(scene),
            scene.tracker_rate_hz, scene.smoothness_s,
        )

    if scene.speed_mps > 0:
        track = _constant_speed_track(
            rng_path, float(frame_times[-1]) if n > 1 else 1.0, scene.tracker_rate_hz,
            scene.speed_mps, scene.object_region_half_mm, scene.smoothness_s, "object",
        )
        q_all, p_all = track.sample(frame_times)
        poses = [RigidTransform(q_all[i], p_all[i]) for i in range(n)]
    else:
        poses = [_sample_object_pose(_pose_rng(scene.seed, i), rig, scene) for i in range(n)]

    frames = []
    depths = []
    camera_poses = []
    surface = model.surface_points
    for i, t in enumerate(frame_times):
        rng_f = _frame_rng(scene.seed, i)
        obj = poses[i]
        per_view = {}
        per_depth = {}
        per_cam_pose = {}
        for cid in ids:
            cam = cam_by_id[cid]
            W2C = _camera_pose_at(cid, truth, hmd_tracks, t)
            per_cam_pose[cid] = W2C
            pose_c = compose(W2C, obj)
            cam_pts = pose_c.apply(surface)
            px, ok = project_points(cam.intrinsics, cam_pts)
            inimg = ok & cam.intrinsics.contains(px)
            if inimg.sum() < 4:
                per_view[cid] = CorrespondenceDistribution(
                    cid, t - truth.clock_offsets[cid], np.zeros((0, 2)), np.zeros((0, 3)),
                    np.zeros(0), np.zeros((1, 1), dtype=bool), (0, 0),
                )
                continue
            # patch bbox around the full projection
            x0 = int(np.floor(px[inimg, 0].min())) - 4
            y0 = int(np.floor(px[inimg, 1].min())) - 4
            x1 = int(np.ceil(px[inimg, 0].max())) + 4
            y1 = int(np.ceil(px[inimg, 1].max())) + 4
            x0 = max(x0, 0)
            y0 = max(y0, 0)
            x1 = min(x1, cam.intrinsics.width)
            y1 = min(y1, cam.intrinsics.height)
            if cid in truth.hand_eye and scene.truncation_fraction > 0:
                side = int(rng_f.integers(0, 4))
                cut_x = int(round((x1 - x0) * scene.truncation_fraction))
                cut_y = int(round((y1 - y0) * scene.truncation_fraction))
                if side == 0:
                    x0 += cut_x
                elif side == 1:
                    x1 -= cut_x
                elif side == 2:
                    y0 += cut_y
                else:
                    y1 -= cut_y
            w, h = x1 - x0, y1 - y0
            if w < 2 or h < 2:
                per_view[cid] = CorrespondenceDistribution(
                    cid, t - truth.clock_offsets[cid], np.zeros((0, 2)), np.zeros((0, 3)),
                    np.zeros(0), np.zeros((1, 1), dtype=bool), (0, 0),
                )
                continue
            mask = rasterize_silhouette(pose_c, surface, cam.intrinsics, (x0, y0), (h, w))

            in_patch = inimg & (px[:, 0] >= x0) & (px[:, 0] < x1) & (px[:, 1] >= y0) & (px[:, 1] < y1)
            vis = in_patch.copy()
            vis[in_patch] &= _zbuffer_visible(px[in_patch], cam_pts[in_patch, 2])

            occluded = np.zeros(len(surface), dtype=bool)
            if scene.occlusion_fraction > 0 and np.any(vis):
                centroid = px[vis].mean(axis=0)
                ang = np.arctan2(px[:, 1] - centroid[1], px[:, 0] - centroid[0])
                a0 = rng_f.uniform(-np.pi, np.pi)
                width = 2.0 * np.pi * scene.occlusion_fraction
                rel = np.mod(ang - a0, 2.0 * np.pi)
                occluded = vis & (rel <= width)
                vis = vis & ~occluded

            sel = np.flatnonzero(vis)
            pix = px[sel].copy()
            if scene.correspondence_noise_px > 0:
                pix += rng_f.normal(0.0, scene.correspondence_noise_px, pix.shape)
                pix[:, 0] = np.clip(pix[:, 0], x0, x1 - 1e-6)
                pix[:, 1] = np.clip(pix[:, 1], y0, y1 - 1e-6)
            pts = surface[sel]
            wts = np.ones(len(sel))
            if scene.outlier_fraction > 0 and len(sel):
                n_out = int(round(scene.outlier_fraction / (1.0 - scene.outlier_fraction) * len(sel)))
                if n_out:
                    opix = np.column_stack(
                        [rng_f.uniform(x0, x1 - 1e-6, n_out), rng_f.uniform(y0, y1 - 1e-6, n_out)]
                    )
                    opts = surface[rng_f.integers(0, len(surface), n_out)]
                    pix = np.vstack([pix, opix])
                    pts = np.vstack([pts, opts])
                    wts = np.concatenate([wts, np.ones(n_out)])
            per_view[cid] = CorrespondenceDistribution(
                cid, t - truth.clock_offsets[cid], pix, pts, wts, mask, (x0, y0)
            )

            if cid in scene.depth_views:
                raster = np.zeros((cam.intrinsics.height, cam.intrinsics.width))
                vis_all = np.flatnonzero(in_patch & _zbuffer_px_front(px, cam_pts[:, 2], in_patch))
                cols = np.floor(px[vis_all, 0]).astype(int)
                rows = np.floor(px[vis_all, 1]).astype(int)
                z = cam_pts[vis_all, 2].copy()
                if scene.depth_noise_mm > 0:
                    z += rng_f.normal(0.0, scene.depth_noise_mm, z.shape)
                occ_sel = occluded[vis_all]
                if np.any(occ_sel):
                    # coherent foreign surface: one standoff per frame, close
                    # enough to sit inside a refiner's matching band
                    z[occ_sel] -= rng_f.uniform(15.0, 60.0)
                if scene.depth_invalid_fraction > 0:
                    bad = rng_f.random(len(z)) < scene.depth_invalid_fraction
                    z[bad] = 0.0
                raster[rows, cols] = z
                per_depth[cid] = raster
        frames.append(per_view)
        depths.append(per_depth)
        camera_poses.append(per_cam_pose)

    qs = np.stack([p.q for p in poses])
    ts = np.stack([p.t for p in poses])
    if n >= 2:
        truth_track = PoseTrack(frame_times, qs, ts, frame_from="object", frame_to="world")
    else:
        truth_track = None
    return ObjectSimulation(
        truth_track=truth_track,
        frames=frames,
        depths=depths,
        frame_times=frame_times,
        truth_poses=poses,
        hmd_tracks=hmd_tracks,
        camera_poses=camera_poses,
    )


def _zbuffer_px_front(px, depth, select):
    """Visibility over the selected points only, at pixel resolution."""
    out = np.zeros(len(px), dtype=bool)
    if np.any(select):
        out[select] = _zbuffer_visible(px[select], depth[select], cell_px=1.0, tol_mm=15.0)
    return out
