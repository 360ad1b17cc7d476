"""Single- and multi-view 6DoF object pose estimation from weighted 2D-3D
correspondence distributions, with optional depth-map refinement.

The learned front end that would produce the distributions is out of scope;
this module consumes them as data (simulated or loaded from file).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import Degenerate, FailedTriangulation, NoSolution, NotEnoughInliers
from .geometry import CameraIntrinsics, CameraModel, RigidTransform, compose, invert, project_points
from .robust import (
    Correspondences2D3D,
    Correspondences3D3D,
    RansacParams,
    kabsch,
    ransac_kabsch,
    ransac_pnp,
    refine_pose_multiview,
    refine_pose_reprojection,
)


class ObjectModel:
    """Rigid object as a sampled surface point set plus metric mesh vertices."""

    def __init__(self, id, surface_points, mesh_vertices=None, diameter=None):
        surface_points = np.asarray(surface_points, dtype=float).reshape(-1, 3)
        if len(surface_points) < 4:
            raise ValueError("object model needs at least 4 surface points")
        centered = surface_points - surface_points.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[2] <= 1e-9 * max(sv[0], 1e-300):
            raise ValueError("surface points are coplanar")
        if mesh_vertices is None:
            mesh_vertices = surface_points
        mesh_vertices = np.asarray(mesh_vertices, dtype=float).reshape(-1, 3)
        if diameter is None:
            lo = surface_points.min(axis=0)
            hi = surface_points.max(axis=0)
            diameter = float(np.linalg.norm(hi - lo))
        if diameter <= 0:
            raise ValueError("diameter must be positive")
        self.id = str(id)
        self.surface_points = surface_points
        self.mesh_vertices = mesh_vertices
        self.diameter = float(diameter)


class CorrespondenceDistribution:
    """Weighted (pixel, model point) samples for one view of one frame.

    The mask is a boolean grid at patch resolution (one cell per pixel),
    anchored at ``patch_origin`` = (x0, y0) in image coordinates. Sample
    pixels must fall inside the patch.
    """

    def __init__(self, camera_id, timestamp, pixels, points, weights, mask, patch_origin):
        pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if not (len(pixels) == len(points) == len(weights)):
            raise ValueError("pixels, points, weights must have equal length")
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("mask must be a 2D grid")
        patch_origin = np.asarray(patch_origin, dtype=int).reshape(2)
        if len(pixels):
            rel = pixels - patch_origin
            h, w = mask.shape
            if np.any(rel[:, 0] < 0) or np.any(rel[:, 0] >= w) or np.any(rel[:, 1] < 0) or np.any(rel[:, 1] >= h):
                raise ValueError("sample pixels must lie inside the patch")
        self.camera_id = str(camera_id)
        self.timestamp = float(timestamp)
        self.pixels = pixels
        self.points = points
        self.weights = weights
        self.mask = mask
        self.patch_origin = patch_origin

    def __len__(self):
        return len(self.pixels)

    @property
    def patch_size(self):
        """(width, height) of the patch in pixels."""
        return (self.mask.shape[1], self.mask.shape[0])

    def correspondences(self) -> Correspondences2D3D:
        return Correspondences2D3D(self.pixels, self.points, self.weights)


@dataclass
class PoseEstimate:
    pose: RigidTransform | None
    score: float
    inlier_count: int
    status: str  # "ok" | "failed_triangulation" | "not_enough_inliers"
    views_used: list

    def __post_init__(self):
        if (self.status == "ok") != (self.pose is not None):
            raise ValueError("status=ok requires a pose, other statuses forbid one")


@dataclass(frozen=True)
class MultiViewParams:
    pair_samples: int = 20000
    epipolar_threshold: float = 2.0
    min_3d_correspondences: int = 3
    ransac: RansacParams = field(default_factory=lambda: RansacParams(inlier_threshold=5.0))
    refine: bool = True
    min_triangulation_deg: float = 2.0

    def __post_init__(self):
        if self.pair_samples < 1:
            raise ValueError("pair_samples must be >= 1")
        if self.min_3d_correspondences < 3:
            raise ValueError("min_3d_correspondences must be >= 3")
        if not (0 <= self.min_triangulation_deg < 90):
            raise ValueError("min_triangulation_deg must be in [0, 90)")


@dataclass(frozen=True)
class DepthRefineResult:
    pose: RigidTransform
    status: str  # "ok" | "insufficient_depth"
    valid_pixels: int
    rms: float


def rasterize_silhouette(pose: RigidTransform, points: np.ndarray, intr: CameraIntrinsics,
                         patch_origin, shape) -> np.ndarray:
    """Boolean patch grid of cells hit by the projected point set under pose.

    The same cell convention (floor of pixel minus patch origin) is used by
    the simulator when it emits masks, so a noiseless distribution scores a
    perfect mask-agreement term at the true pose.
    """
    grid = np.zeros(shape, dtype=bool)
    cam = pose.apply(np.asarray(points, dtype=float).reshape(-1, 3))
    px, ok = project_points(intr, cam)
    if not np.any(ok):
        return grid
    rel = np.floor(px[ok] - np.asarray(patch_origin, dtype=float)).astype(int)
    h, w = shape
    inside = (rel[:, 0] >= 0) & (rel[:, 0] < w) & (rel[:, 1] >= 0) & (rel[:, 1] < h)
    grid[rel[inside, 1], rel[inside, 0]] = True
    return grid


def score_hypothesis(pose: RigidTransform, dist: CorrespondenceDistribution,
                     intr: CameraIntrinsics, model: ObjectModel, sigma: float = 2.0) -> float:
    """Mask-agreement IoU plus weighted correspondence agreement, each in [0, 1].

    The correspondence term is the weighted mean of exp(-r^2 / 2 sigma^2)
    over samples (r = reprojection error in px), so duplicating samples
    leaves the score unchanged.
    """
    sil = rasterize_silhouette(pose, model.surface_points, intr, dist.patch_origin, dist.mask.shape)
    union = np.logical_or(sil, dist.mask).sum()
    iou = float(np.logical_and(sil, dist.mask).sum() / union) if union else 0.0
    if len(dist) == 0:
        return iou
    cam = pose.apply(dist.points)
    px, ok = project_points(intr, cam)
    r2 = np.where(ok, np.sum((np.where(ok[:, None], px, 0.0) - dist.pixels) ** 2, axis=1), np.inf)
    ws = dist.weights.sum()
    w = dist.weights / ws if ws > 0 else np.full(len(dist), 1.0 / len(dist))
    corr = float(w @ np.exp(-r2 / (2.0 * sigma * sigma)))
    return iou + corr


def estimate_single_view(dist: CorrespondenceDistribution, intr: CameraIntrinsics,
                         params: RansacParams, model: ObjectModel) -> PoseEstimate:
    """Best-scoring RANSAC-PnP hypothesis, locally refined; pose in camera frame.

    The top 16 hypotheses by inlier count are rescored with
    ``score_hypothesis`` and the winner is refined on its inlier set.
    """
    views = [dist.camera_id]
    if len(dist) < 4:
        return PoseEstimate(None, 0.0, 0, "not_enough_inliers", views)
    corr = dist.correspondences()
    try:
        res = ransac_pnp(corr, intr, params)
    except (NotEnoughInliers, Degenerate, NoSolution):
        return PoseEstimate(None, 0.0, 0, "not_enough_inliers", views)

    sigma = params.inlier_threshold
    best_pose = None
    best_score = -np.inf
    for pose, _count in res.hypotheses:
        s = score_hypothesis(pose, dist, intr, model, sigma)
        if s > best_score:
            best_pose, best_score = pose, s

    cam = best_pose.apply(corr.points)
    px, ok = project_points(intr, cam)
    r = np.where(ok, np.linalg.norm(np.where(ok[:, None], px, 0.0) - corr.pixels, axis=1), np.inf)
    mask = r <= params.inlier_threshold
    if mask.sum() >= 4:
        refined = refine_pose_reprojection(best_pose, corr.subset(mask), intr)
        s = score_hypothesis(refined.pose, dist, intr, model, sigma)
        if s >= best_score:
            best_pose, best_score = refined.pose, s
    cam = best_pose.apply(corr.points)
    px, ok = project_points(intr, cam)
    r = np.where(ok, np.linalg.norm(np.where(ok[:, None], px, 0.0) - corr.pixels, axis=1), np.inf)
    count = int((r <= params.inlier_threshold).sum())
    if count < 4:
        return PoseEstimate(None, 0.0, 0, "not_enough_inliers", views)
    return PoseEstimate(best_pose, float(best_score), count, "ok", views)


def _fundamental(cam_a: CameraModel, cam_b: CameraModel) -> np.ndarray:
    rel = compose(cam_b.extrinsics, invert(cam_a.extrinsics))
    R = rel.rotation_matrix()
    t = rel.t
    tx = np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0.0]])
    Ka = cam_a.intrinsics.K
    Kb = cam_b.intrinsics.K
    return np.linalg.inv(Kb).T @ tx @ R @ np.linalg.inv(Ka)


def _triangulate_batch(px_a, px_b, cam_a: CameraModel, cam_b: CameraModel,
                       epipolar_threshold: float, min_triangulation_deg: float = 2.0):
    """Midpoint triangulation of pixel pairs; (points (N,3) world, ok (N,)).

    Accepts a pair when the Sampson distance of the undistorted pixels is
    within the threshold, both midpoint depths are positive, and the rays
    cross at an angle of at least min_triangulation_deg (near-parallel and
    near-antiparallel rays give unbounded depth error and are rejected).
    """
    px_a = np.asarray(px_a, dtype=float).reshape(-1, 2)
    px_b = np.asarray(px_b, dtype=float).reshape(-1, 2)
    n = len(px_a)
    ok = np.ones(n, dtype=bool)
    ia, ib = cam_a.intrinsics, cam_b.intrinsics

    na = ia.normalized_from_pixels(px_a)
    nb = ib.normalized_from_pixels(px_b)
    ua = na * [ia.fx, ia.fy] + [ia.cx, ia.cy]  # undistorted pixels
    ub = nb * [ib.fx, ib.fy] + [ib.cx, ib.cy]
    F = _fundamental(cam_a, cam_b)
    xa = np.column_stack([ua, np.ones(n)])
    xb = np.column_stack([ub, np.ones(n)])
    Fx = xa @ F.T
    Ftx = xb @ F
    num = np.abs(np.sum(xb * Fx, axis=1))
    den = np.sqrt(Fx[:, 0] ** 2 + Fx[:, 1] ** 2 + Ftx[:, 0] ** 2 + Ftx[:, 1] ** 2)
    ok &= den > 1e-12
    ok &= num <= epipolar_threshold * np.where(den > 1e-12, den, 1.0)

    # world-frame rays
    wa = invert(cam_a.extrinsics)
    wb = invert(cam_b.extrinsics)
    da = np.column_stack([na, np.ones(n)]) @ wa.rotation_matrix().T
    db = np.column_stack([nb, np.ones(n)]) @ wb.rotation_matrix().T
    oa, ob = wa.t, wb.t

    # closest points on the two rays: minimize |oa + s da - ob - t db|
    daa = np.sum(da * da, axis=1)
    dbb = np.sum(db * db, axis=1)
    dab = np.sum(da * db, axis=1)
    cos_line = np.abs(dab) / np.sqrt(daa * dbb)
    ok &= cos_line <= np.cos(np.radians(min_triangulation_deg))
    diff = ob - oa
    det = daa * dbb - dab * dab
    ok &= det > 1e-12 * daa * dbb
    det_safe = np.where(det > 0, det, 1.0)
    rhs_a = da @ diff
    rhs_b = db @ diff
    s = (dbb * rhs_a - dab * rhs_b) / det_safe
    t = (dab * rhs_a - daa * rhs_b) / det_safe
    pa = oa + s[:, None] * da
    pb = ob + t[:, None] * db
    mid = 0.5 * (pa + pb)

    za = (mid @ cam_a.extrinsics.rotation_matrix().T + cam_a.extrinsics.t)[:, 2]
    zb = (mid @ cam_b.extrinsics.rotation_matrix().T + cam_b.extrinsics.t)[:, 2]
    ok &= (za > 0) & (zb > 0)
    return mid, ok


def triangulate_pair(pixel_a, pixel_b, cam_a: CameraModel, cam_b: CameraModel,
                     epipolar_threshold: float = 2.0, min_triangulation_deg: float = 2.0):
    """Midpoint triangulation of one pixel pair, or None when the pair fails
    the epipolar gate, crosses at too shallow an angle, or lands behind
    either camera.

    Caller guarantees the two samples refer to the same model point; only
    pixel geometry enters here.
    """
    pts, ok = _triangulate_batch(np.atleast_2d(pixel_a), np.atleast_2d(pixel_b),
                                 cam_a, cam_b, epipolar_threshold, min_triangulation_deg)
    return pts[0] if ok[0] else None


def _pair_seed(seed: int, id_a: str, id_b: str) -> np.random.Generator:
    import hashlib

    key = hashlib.sha256(f"{id_a}|{id_b}".encode()).digest()[:8]
    sub = int.from_bytes(key, "little")
    return np.random.Generator(np.random.Philox(key=np.uint64((seed ^ sub) & (2**64 - 1))))


def build_3d3d(dists, cams, params: MultiViewParams) -> Correspondences3D3D:
    """Triangulate a 3D-3D correspondence set from per-view distributions.

    The pair budget is stratified over unordered view pairs in canonical
    (sorted camera id) order, with one independent seeded stream per pair,
    so the output is invariant to permuting the input view list. Each draw
    picks a sample from the pair's first view proportional to weight, then
    a sample from the second view proportional to weight among those
    referencing the same model point within 1 mm (a draw with no matching
    candidate is rejected); the pair is accepted when the triangulation
    gate passes. Match weight is the product of the sample weights; the
    emitted model point is the midpoint of the matched pair.

    Stream order per pair: one uniform per draw for the first view, then
    one uniform per draw for the conditional second pick.

    Raises FailedTriangulation when fewer than min_3d_correspondences
    matches are accepted.
    """
    if len(dists) < 2:
        raise ValueError("need at least 2 views")
    if len(dists) != len(cams):
        raise ValueError("dists and cams must align")
    order = np.argsort([c.id for c in cams])
    pairs = []
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            pairs.append((order[i], order[j]))
    quota = np.full(len(pairs), params.pair_samples // len(pairs))
    quota[: params.pair_samples % len(pairs)] += 1

    worlds, models, weights, views, pixels = [], [], [], [], []
    for (a, b), q in zip(pairs, quota):
        da, db = dists[a], dists[b]
        if q == 0 or len(da) == 0 or len(db) == 0:
            continue
        wa = da.weights.sum()
        if wa <= 0 or db.weights.sum() <= 0:
            continue
        rng = _pair_seed(params.ransac.seed, cams[a].id, cams[b].id)
        cdf_a = np.cumsum(da.weights / wa)
        ja = np.minimum(np.searchsorted(cdf_a, rng.random(q), side="right"), len(da) - 1)
        ub = rng.random(q)

        # candidate second-view samples per first-view sample, by model point
        tree_b = cKDTree(db.points)
        cands = tree_b.query_ball_point(da.points, r=1.0)
        jb = np.full(q, -1)
        for k in range(q):
            c = cands[ja[k]]
            if not c:
                continue
            cw = db.weights[c]
            s = cw.sum()
            if s <= 0:
                continue
            pick = np.searchsorted(np.cumsum(cw / s), ub[k], side="right")
            jb[k] = c[min(pick, len(c) - 1)]
        matched = jb >= 0
        ja, jb = ja[matched], jb[matched]
        if len(ja) == 0:
            continue
        tri, ok = _triangulate_batch(da.pixels[ja], db.pixels[jb], cams[a], cams[b],
                                     params.epipolar_threshold, params.min_triangulation_deg)
        ja, jb = ja[ok], jb[ok]
        if len(ja) == 0:
            continue
        worlds.append(tri[ok])
        models.append(0.5 * (da.points[ja] + db.points[jb]))
        weights.append(da.weights[ja] * db.weights[jb])
        views.append(np.column_stack([np.full(len(ja), a), np.full(len(ja), b)]))
        pixels.append(np.stack([da.pixels[ja], db.pixels[jb]], axis=1))

    total = sum(len(w) for w in worlds)
    if total < params.min_3d_correspondences:
        raise FailedTriangulation(
            f"only {total} 3D-3D matches accepted, need {params.min_3d_correspondences}"
        )
    return Correspondences3D3D(
        np.concatenate(worlds),
        np.concatenate(models),
        np.concatenate(weights),
        np.concatenate(views),
        np.concatenate(pixels),
    )


def estimate_multi_view(dists, cams, params: MultiViewParams, model: ObjectModel) -> PoseEstimate:
    """World-frame object pose from two or more views.

    Triangulates a 3D-3D correspondence set, fits it robustly, and (when
    params.refine) polishes the winner by minimizing reprojection error of
    the inlier matches' source pixels across all contributing views.
    """
    views = sorted(c.id for c in cams)
    if len(dists) < 2:
        raise ValueError("need at least 2 views")
    try:
        corr = build_3d3d(dists, cams, params)
    except FailedTriangulation:
        return PoseEstimate(None, 0.0, 0, "failed_triangulation", views)
    try:
        res = ransac_kabsch(corr, params.ransac)
    except Degenerate:
        return PoseEstimate(None, 0.0, 0, "failed_triangulation", views)
    except NotEnoughInliers:
        return PoseEstimate(None, 0.0, 0, "not_enough_inliers", views)

    pose = res.pose
    count = res.inlier_count
    if params.refine:
        inl = corr.subset(res.inlier_mask)
        per_view = []
        for v in range(len(cams)):
            sel_pix = []
            sel_pts = []
            sel_w = []
            for side in (0, 1):
                m = inl.src_views[:, side] == v
                if np.any(m):
                    sel_pix.append(inl.src_pixels[m, side])
                    sel_pts.append(inl.model[m])
                    sel_w.append(inl.weights[m])
            if sel_pix:
                c2 = Correspondences2D3D(np.concatenate(sel_pix), np.concatenate(sel_pts),
                                         np.concatenate(sel_w))
                per_view.append((c2, cams[v].intrinsics, cams[v].extrinsics))
        if per_view:
            try:
                ref = refine_pose_multiview(pose, per_view)
                pose = ref.pose
            except (ValueError, np.linalg.LinAlgError):
                pass
        r = np.linalg.norm(pose.apply(corr.model) - corr.world, axis=1)
        count = int((r <= params.ransac.inlier_threshold).sum())
    score = count / len(corr)
    return PoseEstimate(pose, float(score), count, "ok", views)


def backproject_depth(depth: np.ndarray, intr: CameraIntrinsics, mask=None, patch_origin=(0, 0)):
    """Camera-frame points from a depth raster (mm, 0 or non-finite = invalid).

    ``mask`` restricts selection to a patch-resolution grid anchored at
    ``patch_origin``; None uses the full image.
    """
    depth = np.asarray(depth, dtype=float)
    x0, y0 = int(patch_origin[0]), int(patch_origin[1])
    if mask is None:
        ys, xs = np.nonzero(np.isfinite(depth) & (depth > 0))
    else:
        rows, cols = np.nonzero(np.asarray(mask, dtype=bool))
        ys = rows + y0
        xs = cols + x0
        inb = (ys >= 0) & (ys < depth.shape[0]) & (xs >= 0) & (xs < depth.shape[1])
        ys, xs = ys[inb], xs[inb]
        d = depth[ys, xs]
        keep = np.isfinite(d) & (d > 0)
        ys, xs = ys[keep], xs[keep]
    if len(ys) == 0:
        return np.zeros((0, 3))
    z = depth[ys, xs]
    pix = np.column_stack([xs + 0.5, ys + 0.5])
    nrm = intr.normalized_from_pixels(pix)
    return np.column_stack([nrm * z[:, None], z])


def refine_on_depth(pose: RigidTransform, depth: np.ndarray, cam: CameraModel,
                    model: ObjectModel, mask, patch_origin=(0, 0),
                    max_iterations: int = 30, trim: float = 0.7) -> DepthRefineResult:
    """Trimmed point-to-point ICP of the model against masked depth pixels.

    ``pose`` maps model to the frame of ``cam``; the refined pose lives in
    the same frame. Fewer than 50 valid masked depth pixels returns the
    input pose unchanged with status "insufficient_depth".
    """
    targets = backproject_depth(depth, cam.intrinsics, mask, patch_origin)
    if len(targets) < 50:
        return DepthRefineResult(pose, "insufficient_depth", len(targets), float("nan"))
    tree = cKDTree(targets)
    src = model.surface_points
    current = pose
    rms = float("nan")
    for _ in range(max_iterations):
        moved = current.apply(src)
        d, idx = tree.query(moved)
        k = max(3, int(np.ceil(trim * len(src))))
        keep = np.argsort(d)[:k]
        rms = float(np.sqrt(np.mean(d[keep] ** 2)))
        try:
            fit = kabsch(Correspondences3D3D(targets[idx[keep]], src[keep]))
        except Degenerate:
            break
        dt = np.linalg.norm(fit.t - current.t)
        dq = min(np.linalg.norm(fit.q - current.q), np.linalg.norm(fit.q + current.q))
        current = fit
        if dt < 1e-9 and dq < 1e-12:
            break
    return DepthRefineResult(current, "ok", len(targets), rms)
