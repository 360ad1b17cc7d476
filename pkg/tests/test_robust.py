"""Solver and robust-estimation tests.

Oracles used here:
- Kabsch noisy fits are compared against scipy.optimize.least_squares
  run on the same weighted objective, initialized at the true transform.
- The refinement Jacobian is compared against central finite differences.
- P3P solutions are validated by reprojecting the three input points.
"""

import numpy as np
import pytest
from scipy.optimize import least_squares

from rigpose import (
    CameraIntrinsics,
    Correspondences2D3D,
    Correspondences3D3D,
    Degenerate,
    NotEnoughInliers,
    RansacParams,
    RigidTransform,
    compose,
    geodesic_distance,
    kabsch,
    perturb,
    project,
    quat_from_rotvec,
    random_quaternion,
    ransac_kabsch,
    ransac_pnp,
    refine_pose_reprojection,
    solve_p3p,
)
from rigpose.robust import _iterations_needed, refine_pose_multiview, reprojection_jacobian

INTR = CameraIntrinsics(fx=800.0, fy=800.0, cx=640.0, cy=480.0, width=1280, height=960)


def _random_pose(rng, t_scale=200.0):
    return RigidTransform(random_quaternion(rng), rng.uniform(-t_scale, t_scale, 3))


def _camera_facing_pose(rng, depth=1000.0):
    """Pose placing the (small) model in front of the camera."""
    rv = rng.normal(size=3) * 0.5
    t = np.array([rng.uniform(-150, 150), rng.uniform(-100, 100), depth + rng.uniform(-200, 200)])
    return RigidTransform.from_rotvec(rv, t)


def _model_points(rng, n=50, scale=80.0):
    return rng.uniform(-scale, scale, (n, 3))


# ------------------------------------------------------------------ kabsch


def test_kabsch_noiseless_exact():
    rng = np.random.default_rng(0)
    T = _random_pose(rng)
    model = _model_points(rng, 10)
    corr = Correspondences3D3D(T.apply(model), model)
    got = kabsch(corr)
    assert geodesic_distance(got.q, T.q) < 1e-9
    assert np.linalg.norm(got.t - T.t) < 1e-9


def test_kabsch_weight_scale_invariance():
    rng = np.random.default_rng(1)
    T = _random_pose(rng)
    model = _model_points(rng, 12)
    w = rng.uniform(0.1, 2.0, 12)
    world = T.apply(model) + rng.normal(0, 1.0, (12, 3))
    a = kabsch(Correspondences3D3D(world, model, w))
    b = kabsch(Correspondences3D3D(world, model, 2.0 * w))
    assert np.array_equal(a.q, b.q)
    assert np.array_equal(a.t, b.t)


def _weighted_rigid_rms(T, corr):
    d = T.apply(corr.model) - corr.world
    return float(np.sqrt((corr.weights @ np.sum(d * d, axis=1)) / corr.weights.sum()))


def test_kabsch_noisy_beats_lm_oracle():
    # closed form must reach the same optimum as an iterative solver
    # started at the true transform
    rng = np.random.default_rng(2)
    for _ in range(10):
        T = _random_pose(rng)
        model = _model_points(rng, 10)
        world = T.apply(model) + rng.normal(0, 1.0, (10, 3))
        w = rng.uniform(0.2, 1.0, 10)
        corr = Correspondences3D3D(world, model, w)
        got = kabsch(corr)

        sw = np.repeat(np.sqrt(w / w.sum()), 3)

        def residual(x):
            P = perturb(T, x)
            return (P.apply(model) - world).reshape(-1) * sw

        sol = least_squares(residual, np.zeros(6), method="lm", xtol=1e-15, ftol=1e-15)
        oracle = perturb(T, sol.x)
        assert _weighted_rigid_rms(got, corr) <= _weighted_rigid_rms(oracle, corr) + 1e-6


def test_kabsch_degenerate_rank():
    line = np.stack([np.linspace(0, 100, 10)] * 3, axis=1) * [1, 0, 0]
    with pytest.raises(Degenerate):
        kabsch(Correspondences3D3D(line + 5.0, line))
    with pytest.raises(Degenerate):
        kabsch(Correspondences3D3D(np.zeros((5, 3)), np.zeros((5, 3))))
    with pytest.raises(Degenerate):
        kabsch(Correspondences3D3D(np.eye(3) + 1.0, np.eye(3), np.zeros(3)))


def test_kabsch_equivariance():
    rng = np.random.default_rng(3)
    model = _model_points(rng, 20)
    T = _random_pose(rng)
    world = T.apply(model) + rng.normal(0, 0.5, (20, 3))
    G = _random_pose(rng)
    base = kabsch(Correspondences3D3D(world, model))
    moved = kabsch(Correspondences3D3D(G.apply(world), model))
    want = compose(G, base)
    assert geodesic_distance(moved.q, want.q) < 1e-9
    assert np.linalg.norm(moved.t - want.t) < 1e-9


# --------------------------------------------------------------------- p3p


def _synthesize_p3p(rng, n=3):
    T = _camera_facing_pose(rng)
    pts = _model_points(rng, n, 120.0)
    px = project(INTR, T.apply(pts))
    return T, pts, px


def test_p3p_noiseless_contains_truth():
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(50):
        T, pts, px = _synthesize_p3p(rng)
        sols = solve_p3p(px, pts, INTR)
        assert 1 <= len(sols) <= 4
        err = min(
            np.linalg.norm(s.t - T.t) + 1000 * geodesic_distance(s.q, T.q) for s in sols
        )
        if err < 1e-6:
            hits += 1
    assert hits == 50


def test_p3p_solutions_reproject_inputs():
    rng = np.random.default_rng(5)
    for _ in range(30):
        _, pts, px = _synthesize_p3p(rng)
        for s in solve_p3p(px, pts, INTR):
            again = project(INTR, s.apply(pts))
            assert np.allclose(again, px, atol=1e-6)


def test_p3p_fourth_point_disambiguates():
    # several admissible poses exist; only the true one also explains a 4th point
    rng = np.random.default_rng(6)
    for _ in range(20):
        T = _camera_facing_pose(rng)
        pts = _model_points(rng, 4, 120.0)
        px = project(INTR, T.apply(pts))
        sols = solve_p3p(px[:3], pts[:3], INTR)
        good = [
            s for s in sols
            if np.linalg.norm(project(INTR, s.apply(pts[3:4]))[0] - px[3]) < 1e-4
        ]
        assert len(good) >= 1
        best = min(good, key=lambda s: np.linalg.norm(s.t - T.t))
        assert np.linalg.norm(best.t - T.t) < 1e-5


def test_p3p_collinear_degenerate():
    pts = np.array([[0, 0, 0], [50, 0, 0], [100, 0, 0]], dtype=float)
    T = RigidTransform.identity()
    shifted = pts + [0, 0, 1000.0]
    px = project(INTR, shifted)
    with pytest.raises(Degenerate):
        solve_p3p(px, pts, INTR)


# -------------------------------------------------------------- refinement


def test_refine_fixed_point_at_truth():
    rng = np.random.default_rng(7)
    T = _camera_facing_pose(rng)
    pts = _model_points(rng)
    corr = Correspondences2D3D(project(INTR, T.apply(pts)), pts)
    res = refine_pose_reprojection(T, corr, INTR)
    assert res.rms < 1e-9
    assert geodesic_distance(res.pose.q, T.q) < 1e-9
    assert np.linalg.norm(res.pose.t - T.t) < 1e-9


def test_refine_recovers_from_perturbation():
    rng = np.random.default_rng(8)
    for _ in range(10):
        T = _camera_facing_pose(rng)
        pts = _model_points(rng)
        corr = Correspondences2D3D(project(INTR, T.apply(pts)), pts)
        start = perturb(T, np.concatenate([rng.normal(size=3) * np.radians(2.0) / np.sqrt(3),
                                           rng.normal(size=3) * 5.0 / np.sqrt(3)]))
        res = refine_pose_reprojection(start, corr, INTR)
        assert res.converged
        assert np.linalg.norm(res.pose.t - T.t) < 1e-6
        assert geodesic_distance(res.pose.q, T.q) < 1e-6


def test_refine_never_increases_rms():
    rng = np.random.default_rng(9)
    T = _camera_facing_pose(rng)
    pts = _model_points(rng)
    px = project(INTR, T.apply(pts)) + rng.normal(0, 2.0, (len(pts), 2))
    corr = Correspondences2D3D(px, pts, rng.uniform(0.1, 1.0, len(pts)))
    start = perturb(T, rng.normal(size=6) * 0.02)

    def wrms(pose):
        d = project(INTR, pose.apply(pts)) - px
        return np.sqrt(corr.weights @ np.sum(d * d, axis=1) / corr.weights.sum())

    res = refine_pose_reprojection(start, corr, INTR)
    assert wrms(res.pose) <= wrms(start) + 1e-12
    assert abs(res.rms - wrms(res.pose)) < 1e-9


def test_reprojection_jacobian_matches_finite_differences():
    rng = np.random.default_rng(10)
    h = 1e-6
    for _ in range(10):
        T = _camera_facing_pose(rng)
        pts = _model_points(rng, 20)
        px = project(INTR, T.apply(pts)) + rng.normal(0, 1.0, (20, 2))
        corr = Correspondences2D3D(px, pts)
        r0, J = reprojection_jacobian(T, corr, INTR)
        Jfd = np.zeros_like(J)
        for k in range(6):
            e = np.zeros(6)
            e[k] = h
            rp, _ = reprojection_jacobian(perturb(T, e), corr, INTR)
            rm, _ = reprojection_jacobian(perturb(T, -e), corr, INTR)
            Jfd[:, k] = (rp - rm) / (2 * h)
        scale = np.abs(J).max()
        assert np.allclose(J, Jfd, atol=1e-5 * max(scale, 1.0))


def test_refine_requires_four_points():
    rng = np.random.default_rng(11)
    T = _camera_facing_pose(rng)
    pts = _model_points(rng, 3)
    corr = Correspondences2D3D(project(INTR, T.apply(pts)), pts)
    with pytest.raises(ValueError):
        refine_pose_reprojection(T, corr, INTR)


def test_refine_multiview_uses_all_views():
    rng = np.random.default_rng(12)
    T = _random_pose(rng, 50.0)  # object near world origin
    pts = _model_points(rng, 40)
    world = T.apply(pts)
    views = []
    for ang in (0.0, 2.0, 4.0):
        ext = RigidTransform.from_rotvec([0, ang, 0], [0, 0, 1000.0])
        px = project(INTR, ext.apply(world))
        views.append((Correspondences2D3D(px, pts), INTR, ext))
    start = perturb(T, rng.normal(size=6) * 0.01)
    res = refine_pose_multiview(start, views)
    assert np.linalg.norm(res.pose.t - T.t) < 1e-6
    assert geodesic_distance(res.pose.q, T.q) < 1e-7


# -------------------------------------------------------------- ransac pnp


def _pnp_scene(rng, n_in=100, n_out=0, sigma=0.0):
    T = _camera_facing_pose(rng)
    pts = _model_points(rng, n_in + n_out, 120.0)
    px = project(INTR, T.apply(pts))
    if sigma > 0:
        px[:n_in] += rng.normal(0, sigma, (n_in, 2))
    if n_out:
        px[n_in:] = rng.uniform([0, 0], [INTR.width, INTR.height], (n_out, 2))
    truth_mask = np.zeros(n_in + n_out, dtype=bool)
    truth_mask[:n_in] = True
    return T, Correspondences2D3D(px, pts), truth_mask


def test_ransac_pnp_noiseless_exact():
    rng = np.random.default_rng(13)
    T, corr, _ = _pnp_scene(rng)
    res = ransac_pnp(corr, INTR, RansacParams(inlier_threshold=2.0, seed=1))
    assert np.linalg.norm(res.pose.t - T.t) < 1e-6
    assert geodesic_distance(res.pose.q, T.q) < 1e-6
    assert res.inlier_mask.all()


def test_ransac_pnp_with_outliers():
    rng = np.random.default_rng(14)
    T, corr, truth_mask = _pnp_scene(rng, n_in=70, n_out=30, sigma=0.5)
    res = ransac_pnp(corr, INTR, RansacParams(inlier_threshold=2.0, seed=2))
    assert np.linalg.norm(res.pose.t - T.t) < 2.0
    precision = (res.inlier_mask & truth_mask).sum() / max(res.inlier_mask.sum(), 1)
    assert precision >= 0.95


def test_ransac_pnp_minimum_input():
    rng = np.random.default_rng(15)
    T, corr, _ = _pnp_scene(rng, n_in=3)
    with pytest.raises(NotEnoughInliers):
        ransac_pnp(corr, INTR, RansacParams())


def test_ransac_pnp_deterministic():
    rng = np.random.default_rng(16)
    _, corr, _ = _pnp_scene(rng, n_in=60, n_out=40, sigma=0.5)
    p = RansacParams(inlier_threshold=2.0, seed=123)
    a = ransac_pnp(corr, INTR, p)
    b = ransac_pnp(corr, INTR, p)
    assert np.array_equal(a.inlier_mask, b.inlier_mask)
    assert np.array_equal(a.pose.q, b.pose.q)
    assert np.array_equal(a.pose.t, b.pose.t)
    assert a.iterations == b.iterations
    c = ransac_pnp(corr, INTR, RansacParams(inlier_threshold=2.0, seed=124))
    assert isinstance(c.inlier_mask, np.ndarray)  # different seed still solves


def test_ransac_pnp_lo_monotone():
    rng = np.random.default_rng(17)
    _, corr, _ = _pnp_scene(rng, n_in=70, n_out=30, sigma=1.0)
    res = ransac_pnp(corr, INTR, RansacParams(inlier_threshold=2.0, seed=3))
    assert res.lo_inlier_counts, "local optimization never ran"
    for before, after in res.lo_inlier_counts:
        assert after >= before


def test_ransac_pnp_adaptive_termination():
    rng = np.random.default_rng(18)
    _, corr, _ = _pnp_scene(rng, n_in=100, n_out=0, sigma=0.0)
    params = RansacParams(inlier_threshold=2.0, confidence=0.999, seed=4)
    res = ransac_pnp(corr, INTR, params)
    w = res.inlier_mask.mean()
    assert res.iterations <= _iterations_needed(params.confidence, w, 3)
    assert res.iterations == 1  # all-inlier data terminates immediately


def test_ransac_pnp_zero_lo_rounds_supported():
    rng = np.random.default_rng(19)
    _, corr, _ = _pnp_scene(rng, n_in=80, n_out=20, sigma=0.5)
    res = ransac_pnp(corr, INTR, RansacParams(inlier_threshold=2.0, seed=5, local_opt_rounds=0))
    assert res.lo_inlier_counts == []
    assert res.inlier_mask.sum() >= 4


# ----------------------------------------------------------- ransac kabsch


def test_ransac_kabsch_noiseless():
    rng = np.random.default_rng(20)
    T = _random_pose(rng)
    model = _model_points(rng, 50)
    corr = Correspondences3D3D(T.apply(model), model)
    res = ransac_kabsch(corr, RansacParams(inlier_threshold=5.0, seed=6))
    assert np.linalg.norm(res.pose.t - T.t) < 1e-9
    assert geodesic_distance(res.pose.q, T.q) < 1e-9
    assert res.inlier_mask.all()


def test_ransac_kabsch_with_outliers():
    rng = np.random.default_rng(21)
    T = _random_pose(rng)
    model = _model_points(rng, 100)
    world = T.apply(model)
    world[:60] += rng.normal(0, 1.0, (60, 3))
    world[60:] = T.t + rng.uniform(-100, 100, (40, 3))  # junk inside a 200 mm box
    res = ransac_kabsch(Correspondences3D3D(world, model),
                        RansacParams(inlier_threshold=5.0, seed=7))
    assert np.degrees(geodesic_distance(res.pose.q, T.q)) < 1.0


def test_ransac_kabsch_identical_points_degenerate():
    pts = np.tile([1.0, 2.0, 3.0], (10, 1))
    with pytest.raises((Degenerate, NotEnoughInliers)):
        ransac_kabsch(Correspondences3D3D(pts, pts), RansacParams(inlier_threshold=5.0, seed=8))


def test_ransac_kabsch_deterministic():
    rng = np.random.default_rng(22)
    T = _random_pose(rng)
    model = _model_points(rng, 80)
    world = T.apply(model) + rng.normal(0, 1.0, (80, 3))
    world[50:] += rng.uniform(20, 60, (30, 3))
    corr = Correspondences3D3D(world, model)
    p = RansacParams(inlier_threshold=5.0, seed=9)
    a = ransac_kabsch(corr, p)
    b = ransac_kabsch(corr, p)
    assert np.array_equal(a.inlier_mask, b.inlier_mask)
    assert np.array_equal(a.pose.t, b.pose.t)
