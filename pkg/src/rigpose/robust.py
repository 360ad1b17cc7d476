"""Robust geometric estimation: Kabsch, P3P, pose refinement, LO-RANSAC.

All randomness flows from the explicit 64-bit seed in ``RansacParams``
through a counter-based Philox stream. Stream order per RANSAC attempt:
three inverse-cdf draws for the minimal sample (duplicate triples are
redrawn from the same stream). Results are therefore deterministic for a
given seed and input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Degenerate, NoSolution, NotEnoughInliers
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    perturb,
    project_points,
    quat_to_matrix,
)


class Correspondences2D3D:
    """A weighted set of pixel <-> 3D point correspondences (struct of arrays)."""

    def __init__(self, pixels, points, weights=None):
        pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pixels) != len(points):
            raise ValueError("pixels and points must have equal length")
        if weights is None:
            weights = np.ones(len(pixels))
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(weights) != len(pixels):
            raise ValueError("weights length mismatch")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and non-negative")
        self.pixels = pixels
        self.points = points
        self.weights = weights

    def __len__(self):
        return len(self.pixels)

    def subset(self, index) -> "Correspondences2D3D":
        return Correspondences2D3D(self.pixels[index], self.points[index], self.weights[index])


class Correspondences3D3D:
    """Weighted 3D <-> 3D matches (world <- model), with optional provenance.

    ``src_views`` and ``src_pixels`` record, for triangulated matches, the
    two view indices and the two image samples each match came from, so a
    multi-view reprojection refinement can be run on the same data.
    """

    def __init__(self, world, model, weights=None, src_views=None, src_pixels=None):
        world = np.asarray(world, dtype=float).reshape(-1, 3)
        model = np.asarray(model, dtype=float).reshape(-1, 3)
        if len(world) != len(model):
            raise ValueError("world and model must have equal length")
        if weights is None:
            weights = np.ones(len(world))
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(weights) != len(world):
            raise ValueError("weights length mismatch")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and non-negative")
        self.world = world
        self.model = model
        self.weights = weights
        self.src_views = None if src_views is None else np.asarray(src_views, dtype=int).reshape(-1, 2)
        self.src_pixels = None if src_pixels is None else np.asarray(src_pixels, dtype=float).reshape(-1, 2, 2)

    def __len__(self):
        return len(self.world)

    def subset(self, index) -> "Correspondences3D3D":
        return Correspondences3D3D(
            self.world[index],
            self.model[index],
            self.weights[index],
            None if self.src_views is None else self.src_views[index],
            None if self.src_pixels is None else self.src_pixels[index],
        )


@dataclass(frozen=True)
class RansacParams:
    """LO-RANSAC settings. inlier_threshold is px for PnP, mm for 3D fits."""

    inlier_threshold: float = 2.0
    confidence: float = 0.999
    max_iterations: int = 10000
    local_opt_rounds: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.confidence < 1):
            raise ValueError("confidence must be in (0, 1)")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RansacResult:
    pose: RigidTransform
    inlier_mask: np.ndarray
    iterations: int
    hypotheses: list  # [(pose, inlier_count)] best-first, up to 16
    lo_inlier_counts: list  # [(count_before, count_kept)] per local-opt round

    @property
    def inlier_count(self) -> int:
        return int(self.inlier_mask.sum())


@dataclass(frozen=True)
class RefineResult:
    pose: RigidTransform
    converged: bool
    rms: float
    iterations: int


def kabsch(corr: Correspondences3D3D) -> RigidTransform:
    """Weighted least-squares rigid fit T with T.apply(model) ~ world.

    Closed form via SVD of the weighted cross-covariance, with the usual
    sign correction so the result is a proper rotation (det +1).

    Raises Degenerate when the centered model points have rank < 2
    (collinear or coincident), which leaves the rotation unconstrained.
    """
    if len(corr) < 3:
        raise Degenerate("rigid fit needs at least 3 correspondences")
    w = corr.weights
    ws = w.sum()
    if ws <= 0:
        raise Degenerate("all correspondence weights are zero")
    w = w / ws
    cm = w @ corr.model
    cw = w @ corr.world
    M = corr.model - cm
    W = corr.world - cw
    sv = np.linalg.svd(M * np.sqrt(w)[:, None], compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise Degenerate("centered model points have rank < 2")
    H = (M * w[:, None]).T @ W
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cw - R @ cm
    return RigidTransform.from_rotation_matrix(R, t)


def _skew(v):
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _projection_jacobian(intr: CameraIntrinsics, pts: np.ndarray) -> np.ndarray:
    """d(pixel)/d(camera point) for points (N, 3) with z > 0; returns (N, 2, 3)."""
    X, Y, Z = pts[:, 0], pts[:, 1], pts[:, 2]
    xn = X / Z
    yn = Y / Z
    r2 = xn * xn + yn * yn
    radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2 + intr.k3 * r2 * r2 * r2
    dr = intr.k1 + 2.0 * intr.k2 * r2 + 3.0 * intr.k3 * r2 * r2
    dxd_dx = radial + 2.0 * xn * xn * dr + 2.0 * intr.p1 * yn + 6.0 * intr.p2 * xn
    dxd_dy = 2.0 * xn * yn * dr + 2.0 * intr.p1 * xn + 2.0 * intr.p2 * yn
    dyd_dx = 2.0 * xn * yn * dr + 2.0 * intr.p1 * xn + 2.0 * intr.p2 * yn
    dyd_dy = radial + 2.0 * yn * yn * dr + 6.0 * intr.p1 * yn + 2.0 * intr.p2 * xn
    n = len(pts)
    Jn = np.zeros((n, 2, 2))
    Jn[:, 0, 0] = intr.fx * dxd_dx
    Jn[:, 0, 1] = intr.fx * dxd_dy
    Jn[:, 1, 0] = intr.fy * dyd_dx
    Jn[:, 1, 1] = intr.fy * dyd_dy
    Jp = np.zeros((n, 2, 3))
    iz = 1.0 / Z
    Jp[:, 0, 0] = iz
    Jp[:, 0, 2] = -X * iz * iz
    Jp[:, 1, 1] = iz
    Jp[:, 1, 2] = -Y * iz * iz
    return Jn @ Jp


def _pose_point_jacobian(pose: RigidTransform, points: np.ndarray) -> np.ndarray:
    """d(camera point)/d(xi) for the left perturbation in perturb(); (N, 3, 6)."""
    rx = quat_to_matrix(pose.q) @ points.T  # (3, N) rotated points, no translation
    J = np.zeros((points.shape[0], 3, 6))
    J[:, :, :3] = -_skew(rx.T)
    J[:, 0, 3] = 1.0
    J[:, 1, 4] = 1.0
    J[:, 2, 5] = 1.0
    return J


def reprojection_residuals(pose: RigidTransform, corr: Correspondences2D3D, intr: CameraIntrinsics):
    """Unweighted residual vector (2N,): predicted minus observed pixels."""
    cam = pose.apply(corr.points)
    px, ok = project_points(intr, cam)
    res = px - corr.pixels
    res[~ok] = 1e9  # behind-camera points dominate the cost
    return res.reshape(-1)


def reprojection_jacobian(pose: RigidTransform, corr: Correspondences2D3D, intr: CameraIntrinsics):
    """Residuals (2N,) and Jacobian (2N, 6) w.r.t. the 6-vector of perturb().

    Parameter order: (rotvec_x, rotvec_y, rotvec_z, t_x, t_y, t_z), applied
    as a left perturbation of the pose.
    """
    cam = pose.apply(corr.points)
    px, ok = project_points(intr, cam)
    res = px - corr.pixels
    res[~ok] = 1e9
    J = np.zeros((len(corr), 2, 6))
    if np.any(ok):
        Jproj = _projection_jacobian(intr, cam[ok])
        Jpose = _pose_point_jacobian(pose, corr.points[ok])
        J[ok] = Jproj @ Jpose
    return res.reshape(-1), J.reshape(-1, 6)


def _lm(state, res_jac_fn, apply_step, max_iterations=100, step_tol=1e-10):
    """Damped Gauss-Newton over an abstract state; accepts only cost decreases.

    res_jac_fn(state) -> (r, J); cost compared as mean squared residual so
    states with differing residual counts stay comparable.
    """
    r, J = res_jac_fn(state)
    if r.size == 0:
        return state, False, 0, 0.0
    cost = float(r @ r) / r.size
    lam = 1e-6
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        H = J.T @ J
        g = J.T @ r
        D = np.clip(np.diag(H), 1e-12, None)
        accepted = False
        step = None
        for _ in range(30):
            try:
                step = np.linalg.solve(H + lam * np.diag(D), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = apply_step(state, step)
            rc, Jc = res_jac_fn(cand)
            if rc.size == 0:
                break
            cc = float(rc @ rc) / rc.size
            if cc <= cost * (1.0 + 1e-12):
                state, r, J, cost = cand, rc, Jc, cc
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no descent direction left: local minimum
            break
        if np.linalg.norm(step) < step_tol:
            converged = True
            break
    return state, converged, it, float(np.sqrt(cost))


def refine_pose_reprojection(
    initial: RigidTransform,
    corr: Correspondences2D3D,
    intr: CameraIntrinsics,
    max_iterations: int = 100,
    step_tol: float = 1e-10,
) -> RefineResult:
    """Minimize weighted reprojection error over a local 6-dof perturbation.

    Damped Gauss-Newton; stops when the step norm drops below ``step_tol``
    or after ``max_iterations``. The weighted RMS never increases relative
    to the initial pose. ``converged`` is False when the iteration cap was
    the stopping reason.
    """
    if len(corr) < 4:
        raise ValueError("refinement needs at least 4 correspondences")
    sw = np.repeat(np.sqrt(corr.weights), 2)

    def res_jac(pose):
        r, J = reprojection_jacobian(pose, corr, intr)
        return r * sw, J * sw[:, None]

    pose, converged, it, _ = _lm(initial, res_jac, perturb, max_iterations, step_tol)
    # report rms in pixels over positive weights
    r = reprojection_residuals(pose, corr, intr).reshape(-1, 2)
    d2 = np.sum(r * r, axis=1)
    wsum = corr.weights.sum()
    rms = float(np.sqrt((corr.weights @ d2) / wsum)) if wsum > 0 else 0.0
    return RefineResult(pose=pose, converged=converged, rms=rms, iterations=it)


def refine_pose_multiview(initial: RigidTransform, views, max_iterations: int = 100,
                          step_tol: float = 1e-10) -> RefineResult:
    """Refine a world-frame pose against several calibrated views.

    ``views`` is a sequence of (Correspondences2D3D, CameraIntrinsics,
    extrinsics) triples; extrinsics map world to that camera.
    """
    views = [(c, i, e) for c, i, e in views if len(c) > 0]
    if sum(len(c) for c, _, _ in views) < 3:
        raise ValueError("refinement needs at least 3 correspondences in total")

    def res_jac(pose):
        rs = []
        Js = []
        for corr, intr, extr in views:
            Rv = extr.rotation_matrix()
            world = pose.apply(corr.points)
            cam = world @ Rv.T + extr.t
            px, ok = project_points(intr, cam)
            r = px - corr.pixels
            r[~ok] = 1e9
            J = np.zeros((len(corr), 2, 6))
            if np.any(ok):
                Jproj = _projection_jacobian(intr, cam[ok])
                Jpose = _pose_point_jacobian(pose, corr.points[ok])
                J[ok] = Jproj @ (Rv @ Jpose)
            sw = np.sqrt(corr.weights)
            rs.append((r * sw[:, None]).reshape(-1))
            Js.append((J * sw[:, None, None]).reshape(-1, 6))
        return np.concatenate(rs), np.concatenate(Js)

    pose, converged, it, rms = _lm(initial, res_jac, perturb, max_iterations, step_tol)
    return RefineResult(pose=pose, converged=converged, rms=rms, iterations=it)


def _solve_quartic_real(coeffs):
    """Real roots of a quartic (leading coefficient may be tiny)."""
    c = np.asarray(coeffs, dtype=float)
    nz = np.flatnonzero(np.abs(c) > 1e-14 * np.abs(c).max())
    if nz.size == 0:
        return np.zeros(0)
    roots = np.roots(c[nz[0]:])
    real = roots[np.abs(roots.imag) <= 1e-6 * (1.0 + np.abs(roots.real))].real
    return real


def solve_p3p(pixels, points, intr: CameraIntrinsics) -> list[RigidTransform]:
    """Minimal absolute pose from three 2D-3D correspondences.

    Direct parameterization of the three-point problem in intermediate
    camera and world frames, reduced to a quartic in cos(theta). Returns
    up to four model-to-camera transforms; each returned pose has all
    three depths positive and reprojects the three inputs within 1e-6 px
    (verified after a short Gauss-Newton polish).

    Pixels must be undistorted, or the intrinsics distortion-free; only
    the pinhole part of ``intr`` enters the bearing computation.

    Raises Degenerate for collinear world points, NoSolution when no
    admissible root survives.
    """
    P = np.array(points, dtype=float).reshape(3, 3)
    px = np.asarray(pixels, dtype=float).reshape(3, 2)
    scale = max(np.linalg.norm(P[1] - P[0]), np.linalg.norm(P[2] - P[0]), 1e-12)
    if np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0])) < 1e-9 * scale * scale:
        raise Degenerate("world points are collinear")

    f = intr.bearings(px)
    f1, f2, f3 = f
    P1, P2, P3 = P

    def intermediate(f1, f2):
        e1 = f1
        e3 = np.cross(f1, f2)
        n = np.linalg.norm(e3)
        if n < 1e-12:
            raise Degenerate("bearing vectors are parallel")
        e3 = e3 / n
        return np.stack([e1, np.cross(e3, e1), e3])

    T = intermediate(f1, f2)
    f3t = T @ f3
    if f3t[2] > 0:
        f1, f2 = f2, f1
        P1, P2 = P2.copy(), P1.copy()
        T = intermediate(f1, f2)
        f3t = T @ f3

    n1 = P2 - P1
    d12 = np.linalg.norm(n1)
    n1 = n1 / d12
    n3 = np.cross(n1, P3 - P1)
    n3 = n3 / np.linalg.norm(n3)
    N = np.stack([n1, np.cross(n3, n1), n3])
    P3n = N @ (P3 - P1)
    p_1, p_2 = P3n[0], P3n[1]

    if abs(f3t[2]) < 1e-12:
        raise NoSolution("third bearing parallel to the intermediate image plane")
    f_1 = f3t[0] / f3t[2]
    f_2 = f3t[1] / f3t[2]
    cos_beta = float(f1 @ f2)
    denom = 1.0 - cos_beta * cos_beta
    if denom < 1e-12:
        raise Degenerate("bearing vectors are parallel")
    b = np.sqrt(1.0 / denom - 1.0)
    if cos_beta < 0:
        b = -b

    f1p2, f2p2 = f_1 * f_1, f_2 * f_2
    p1p2 = p_1 * p_1
    p1p3 = p1p2 * p_1
    p1p4 = p1p3 * p_1
    p2p2 = p_2 * p_2
    p2p3 = p2p2 * p_2
    p2p4 = p2p3 * p_2
    d12p2 = d12 * d12
    bp2 = b * b

    a4 = -f2p2 * p2p4 - p2p4 * f1p2 - p2p4
    a3 = 2.0 * p2p3 * d12 * b + 2.0 * f2p2 * p2p3 * d12 * b - 2.0 * f_2 * p2p3 * f_1 * d12
    a2 = (
        -f2p2 * p2p2 * p1p2
        - f2p2 * p2p2 * d12p2 * bp2
        - f2p2 * p2p2 * d12p2
        + f2p2 * p2p4
        + p2p4 * f1p2
        + 2.0 * p_1 * p2p2 * d12
        + 2.0 * f_1 * f_2 * p_1 * p2p2 * d12 * b
        - p2p2 * p1p2 * f1p2
        + 2.0 * p_1 * p2p2 * f2p2 * d12
        - p2p2 * d12p2 * bp2
        - 2.0 * p1p2 * p2p2
    )
    a1 = (
        2.0 * p1p2 * p_2 * d12 * b
        + 2.0 * f_2 * p2p3 * f_1 * d12
        - 2.0 * f2p2 * p2p3 * d12 * b
        - 2.0 * p_1 * p_2 * d12p2 * b
    )
    a0 = (
        -2.0 * f_2 * p2p2 * f_1 * p_1 * d12 * b
        + f2p2 * p2p2 * d12p2
        + 2.0 * p1p3 * d12
        - p1p2 * d12p2
        + f2p2 * p2p2 * p1p2
        - p1p4
        - 2.0 * f2p2 * p2p2 * p_1 * d12
        + p2p2 * f1p2 * p1p2
        + f2p2 * p2p2 * d12p2 * bp2
    )

    corr3 = Correspondences2D3D(px, P)
    sw = np.ones(6)
    out: list[RigidTransform] = []
    for ct in _solve_quartic_real([a4, a3, a2, a1, a0]):
        ct = float(np.clip(ct, -1.0, 1.0))
        den = -f_1 * ct * p_2 / f_2 + p_1 - d12
        if abs(den) < 1e-14:
            continue
        cot_alpha = (-f_1 * p_1 / f_2 - ct * p_2 + d12 * b) / den
        st = np.sqrt(max(0.0, 1.0 - ct * ct))
        sin_alpha = np.sqrt(1.0 / (cot_alpha * cot_alpha + 1.0))
        cos_alpha = np.sqrt(max(0.0, 1.0 - sin_alpha * sin_alpha))
        if cot_alpha < 0:
            cos_alpha = -cos_alpha
        amp = d12 * (sin_alpha * b + cos_alpha)
        C = np.array([cos_alpha * amp, ct * sin_alpha * amp, st * sin_alpha * amp])
        C = P1 + N.T @ C
        Rm = np.array(
            [
                [-cos_alpha, -sin_alpha * ct, -sin_alpha * st],
                [sin_alpha, -cos_alpha * ct, -cos_alpha * st],
                [0.0, -st, ct],
            ]
        )
        R_wc = N.T @ Rm.T @ T
        R_cw = R_wc.T
        cand = RigidTransform.from_rotation_matrix(R_cw, -R_cw @ C)
        # polish the root against the three points, then gate hard
        def res_jac(pose):
            r, J = reprojection_jacobian(pose, corr3, intr)
            return r * sw, J * sw[:, None]

        cand, _, _, _ = _lm(cand, res_jac, perturb, max_iterations=5, step_tol=1e-14)
        cam = cand.apply(P)
        if np.any(cam[:, 2] <= 0):
            continue
        px_hat, _ = project_points(intr, cam)
        if np.max(np.linalg.norm(px_hat - px, axis=1)) > 1e-6:
            continue
        if any(
            np.linalg.norm(prev.t - cand.t) < 1e-6
            and np.linalg.norm(prev.q - cand.q) < 1e-9
            for prev in out
        ):
            continue
        out.append(cand)
    if not out:
        raise NoSolution("no admissible P3P root")
    return out


def _iterations_needed(confidence: float, inlier_ratio: float, sample_size: int) -> float:
    if inlier_ratio <= 0.0:
        return np.inf
    p_all = inlier_ratio**sample_size
    if p_all >= 1.0:
        return 1.0
    return float(np.ceil(np.log(1.0 - confidence) / np.log(1.0 - p_all)))


def _draw_triple(rng, cdf):
    for _ in range(64):
        idx = np.searchsorted(cdf, rng.random(3), side="right")
        idx = np.minimum(idx, len(cdf) - 1)
        if idx[0] != idx[1] and idx[0] != idx[2] and idx[1] != idx[2]:
            return idx
    raise Degenerate("sampling weights concentrate on fewer than 3 points")


def _lo_ransac(params, weights, solve_fn, residual_fn, refine_fn, min_inliers, fail_msg):
    n = len(weights)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(params.seed & (2**64 - 1))))
    ws = weights.sum()
    p = np.full(n, 1.0 / n) if ws <= 0 else weights / ws
    cdf = np.cumsum(p)

    best_pose = None
    best_mask = None
    best_key = (0, -np.inf)  # (inlier count, -mean inlier residual)
    hyps = []
    lo_counts = []
    executed = 0
    rejected = 0
    max_rejected = max(1000, 5 * params.max_iterations)
    needed = float(params.max_iterations)
    seq = 0

    def consider(pose, order):
        r = residual_fn(pose)
        mask = r <= params.inlier_threshold
        count = int(mask.sum())
        mean_res = float(r[mask].mean()) if count else np.inf
        hyps.append((count, -mean_res, -order, pose, mask))
        if len(hyps) > 64:
            hyps.sort(key=lambda h: h[:3], reverse=True)
            del hyps[16:]
        return mask, count, mean_res

    while executed < min(params.max_iterations, needed):
        try:
            idx = _draw_triple(rng, cdf)
            models = solve_fn(idx)
        except (Degenerate, NoSolution):
            models = []
        if not models:
            rejected += 1
            if rejected >= max_rejected:
                break
            continue
        executed += 1
        for m in models:
            seq += 1
            mask, count, mean_res = consider(m, seq)
            if (count, -mean_res) <= best_key:
                continue
            cur_pose, cur_mask, cur_count, cur_mean = m, mask, count, mean_res
            if refine_fn is not None and cur_count >= min_inliers:
                for _ in range(params.local_opt_rounds):
                    ref = refine_fn(cur_pose, cur_mask)
                    if ref is None:
                        break
                    seq += 1
                    m2, c2, mean2 = consider(ref, seq)
                    lo_counts.append((cur_count, max(c2, cur_count)))
                    if c2 < cur_count or (c2 == cur_count and mean2 >= cur_mean):
                        break
                    cur_pose, cur_mask, cur_count, cur_mean = ref, m2, c2, mean2
            if (cur_count, -cur_mean) > best_key:
                best_pose, best_mask = cur_pose, cur_mask
                best_key = (cur_count, -cur_mean)
            needed = _iterations_needed(params.confidence, best_key[0] / n, 3)

    if best_pose is None or best_key[0] < min_inliers:
        raise NotEnoughInliers(fail_msg)
    hyps.sort(key=lambda h: h[:3], reverse=True)
    top = [(h[3], h[0]) for h in hyps[:16]]
    return RansacResult(
        pose=best_pose,
        inlier_mask=best_mask,
        iterations=executed,
        hypotheses=top,
        lo_inlier_counts=lo_counts,
    )


def ransac_pnp(corr: Correspondences2D3D, intr: CameraIntrinsics, params: RansacParams) -> RansacResult:
    """LO-RANSAC absolute pose: P3P minimal samples + full refinement on consensus.

    Minimal triples are drawn proportional to correspondence weight.
    Near-collinear pixel triples (triangle area below 1e-6 of the squared
    pixel spread) and degenerate point triples are rejected and redrawn
    without consuming the iteration budget. Adaptive termination stops
    after ceil(log(1-confidence)/log(1-w^3)) iterations for the best
    inlier ratio w seen so far.
    """
    n = len(corr)
    if n < 4:
        raise NotEnoughInliers("PnP needs at least 4 correspondences")
    pixels = corr.pixels
    points = corr.points
    span = pixels.max(axis=0) - pixels.min(axis=0)
    area_tol = 1e-6 * max(float(span @ span), 1.0)

    def solve_fn(idx):
        tri = pixels[idx]
        area = 0.5 * abs(
            (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
            - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
        )
        if area <= area_tol:
            raise Degenerate("collinear pixel triple")
        return solve_p3p(tri, points[idx], intr)

    def residual_fn(pose):
        cam = pose.apply(points)
        px, ok = project_points(intr, cam)
        r = np.where(ok, np.linalg.norm(np.where(ok[:, None], px - pixels, 0.0), axis=1), np.inf)
        return r

    def refine_fn(pose, mask):
        if mask.sum() < 4:
            return None
        try:
            return refine_pose_reprojection(pose, corr.subset(mask), intr).pose
        except np.linalg.LinAlgError:
            return None

    return _lo_ransac(params, corr.weights, solve_fn, residual_fn, refine_fn, 4,
                      "no 4-inlier pose hypothesis found")


def ransac_kabsch(corr: Correspondences3D3D, params: RansacParams) -> RansacResult:
    """LO-RANSAC rigid fit on 3D-3D matches; threshold in mm."""
    n = len(corr)
    if n < 3:
        raise NotEnoughInliers("rigid fit needs at least 3 correspondences")
    centered = corr.model - corr.model.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise Degenerate("model points have rank < 2")

    def solve_fn(idx):
        return [kabsch(Correspondences3D3D(corr.world[idx], corr.model[idx]))]

    def residual_fn(pose):
        return np.linalg.norm(pose.apply(corr.model) - corr.world, axis=1)

    def refine_fn(pose, mask):
        if mask.sum() < 3:
            return None
        try:
            return kabsch(corr.subset(mask))
        except Degenerate:
            return None

    return _lo_ransac(params, corr.weights, solve_fn, residual_fn, refine_fn, 3,
                      "no 3-inlier rigid fit found")
