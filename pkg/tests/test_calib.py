"""Spatial-temporal calibration tests.

Ground truth comes from the generator's truth record; the solver never
sees it. Offsets are injected with both signs to pin down the clock
convention (world time = camera time + offset) end to end: the solved
offset must equal the injected one, not its negative.
"""

import numpy as np
import pytest

from rigpose import (
    CalibrationBoard,
    ConfigError,
    CornerFrame,
    CornerObservationSequence,
    LowIdentifiability,
    NoOverlap,
    RansacParams,
    RigSpec,
    SceneSpec,
    UnknownCamera,
    compose,
    geodesic_distance,
    invert,
    make_rig,
    simulate_board,
)
from rigpose.calib import (
    StaticCalibResult,
    SyncSolveConfig,
    calibrate_rig,
    calibrate_static_camera,
    estimate_mobile_offset,
    evaluate_calibration,
    solve_extrinsics_fixed_offset,
)

BOARD = CalibrationBoard.grid(5, 7, 40.0)
CFG = SyncSolveConfig(
    offset_search_range=0.12,
    offset_grid_step=0.005,
    ransac=RansacParams(inlier_threshold=2.0, seed=0),
)


def _scene(**kw):
    base = dict(duration_s=6.0, rate_hz=10.0, speed_mps=0.5, seed=11)
    base.update(kw)
    return SceneSpec(**base)


def _board_sim(offsets=None, noise=0.0, hmd=0, **scene_kw):
    spec = RigSpec(
        perimeter_cameras=2,
        ceiling_camera=False,
        hmd_cameras=hmd,
        clock_offsets_s=offsets or {},
    )
    cams, truth = make_rig(spec)
    sim = simulate_board(cams, truth, BOARD, _scene(corner_noise_px=noise, **scene_kw))
    return cams, truth, sim


def _extrinsics_error(est, true):
    d = compose(est, invert(true))
    return np.linalg.norm(d.t), np.degrees(geodesic_distance(d.q, np.array([1.0, 0, 0, 0])))


# ------------------------------------------------------------- static solve


def test_static_recovers_offset_and_extrinsics_noiseless():
    cams, truth, sim = _board_sim(offsets={"OL": 0.05, "OR": -0.02})
    for cam in cams:
        res = calibrate_static_camera(
            sim.observations[cam.id], sim.board_track, BOARD, cam.intrinsics, CFG
        )
        # sign pins the convention: +50 ms in, +50 ms out
        assert abs(res.clock_offset - truth.clock_offsets[cam.id]) < 5e-4
        dt, dr = _extrinsics_error(res.extrinsics, truth.extrinsics[cam.id])
        assert dt < 0.5
        assert dr < 0.02
        assert res.inlier_ratio > 0.99
        assert res.mean_reproj_error < 0.1


def test_static_offset_matches_independent_fine_scan():
    cams, truth, sim = _board_sim(offsets={"OL": 0.033})
    cam = cams[0]
    obs = sim.observations["OL"]
    res = calibrate_static_camera(obs, sim.board_track, BOARD, cam.intrinsics, CFG)

    # independent objective: clipped-mean reprojection through the truth
    # extrinsics at each candidate offset
    times, ids, pixels = obs.flatten()
    pts = BOARD.points[ids]

    def truth_objective(delta):
        valid = sim.board_track.valid_mask(times + delta, CFG.max_track_gap)
        q, p = sim.board_track.sample(times[valid] + delta)
        world = np.einsum(
            "nij,nj->ni",
            np.stack([_quat_mat(qi) for qi in q]),
            pts[valid],
        ) + p
        from rigpose import project_points

        px, ok = project_points(cam.intrinsics, truth.extrinsics["OL"].apply(world))
        r = np.linalg.norm(px - pixels[valid], axis=1)
        r[~ok] = np.inf
        return np.minimum(r, 2.0).mean()

    fine = np.arange(0.025, 0.041, 0.0005)
    vals = [truth_objective(d) for d in fine]
    assert abs(res.clock_offset - fine[int(np.argmin(vals))]) < 1e-3


def _quat_mat(q):
    from rigpose import quat_to_matrix

    return quat_to_matrix(q)


def test_static_noisy_still_within_tolerance():
    cams, truth, sim = _board_sim(offsets={"OL": -0.12}, noise=0.5, duration_s=10.0)
    cam = cams[0]
    cfg = SyncSolveConfig(
        offset_search_range=0.2, offset_grid_step=0.005,
        ransac=RansacParams(inlier_threshold=2.0, seed=1),
    )
    res = calibrate_static_camera(sim.observations["OL"], sim.board_track, BOARD, cam.intrinsics, cfg)
    assert abs(res.clock_offset + 0.12) < 2e-3
    dt, dr = _extrinsics_error(res.extrinsics, truth.extrinsics["OL"])
    assert dt < 2.0
    assert dr < 0.1


def test_static_stationary_board_unidentifiable():
    cams, truth, sim = _board_sim(speed_mps=0.0)
    with pytest.raises(LowIdentifiability) as exc:
        calibrate_static_camera(sim.observations["OL"], sim.board_track, BOARD,
                                cams[0].intrinsics, CFG)
    assert len(exc.value.offsets) == len(exc.value.objectives)


def test_fixed_offset_solve_and_no_overlap():
    cams, truth, sim = _board_sim(offsets={"OL": 0.04, "OR": 0.04})
    res = solve_extrinsics_fixed_offset(
        sim.observations["OR"], sim.board_track, BOARD, cams[1].intrinsics, CFG, 0.04
    )
    dt, dr = _extrinsics_error(res.extrinsics, truth.extrinsics["OR"])
    assert dt < 0.5 and dr < 0.02
    assert res.clock_offset == 0.04
    with pytest.raises(NoOverlap):
        solve_extrinsics_fixed_offset(
            sim.observations["OR"], sim.board_track, BOARD, cams[1].intrinsics, CFG, 100.0
        )


# --------------------------------------------------------------- rig level


def test_calibrate_rig_sync_group_shares_offset():
    cams, truth, sim = _board_sim(offsets={"OL": 0.03, "OR": 0.03})
    calib = calibrate_rig(
        sim.observations, sim.board_track, BOARD,
        {c.id: c.intrinsics for c in cams}, CFG,
        sync_groups={"G": ["OL", "OR"]},
    )
    assert not calib.failures
    assert calib.results["OL"].clock_offset == calib.results["OR"].clock_offset
    assert calib.group_offsets == {"G": calib.results["OL"].clock_offset}
    assert abs(calib.results["OL"].clock_offset - 0.03) < 5e-4
    dt, _ = _extrinsics_error(calib.results["OR"].extrinsics, truth.extrinsics["OR"])
    assert dt < 0.5


def test_calibrate_rig_isolates_failures():
    cams, truth, sim = _board_sim(offsets={"OL": 0.02})
    obs = dict(sim.observations)
    # one camera contributes a single thin frame: unsolvable, flat objective
    obs["OR"] = CornerObservationSequence(
        "OR", [CornerFrame(0.0, np.arange(4), np.array([[10.0, 10], [20, 10], [10, 20], [20, 20]]))]
    )
    calib = calibrate_rig(obs, sim.board_track, BOARD,
                          {c.id: c.intrinsics for c in cams}, CFG)
    assert "OR" in calib.failures
    assert "OL" in calib.results
    assert abs(calib.results["OL"].clock_offset - 0.02) < 5e-4


def test_calibrate_rig_group_validation():
    cams, truth, sim = _board_sim()
    intr = {c.id: c.intrinsics for c in cams}
    with pytest.raises(UnknownCamera):
        calibrate_rig(sim.observations, sim.board_track, BOARD, intr, CFG,
                      sync_groups={"G": ["OL", "ZZ"]})
    with pytest.raises(ConfigError):
        calibrate_rig(sim.observations, sim.board_track, BOARD, intr, CFG,
                      sync_groups={"G": ["OL"], "H": ["OL"]})
    with pytest.raises(ConfigError):
        calibrate_rig(sim.observations, sim.board_track, BOARD, intr, CFG,
                      sync_groups={"G": []})
    with pytest.raises(UnknownCamera):
        calibrate_rig({"ZZ": sim.observations["OL"]}, sim.board_track, BOARD, intr, CFG)


# ------------------------------------------------------------------ mobile


def test_mobile_offset_recovery():
    cams, truth, sim = _board_sim(offsets={"S": -0.075}, hmd=1, duration_s=8.0)
    cam = next(c for c in cams if c.id == "S")
    res = estimate_mobile_offset(
        sim.observations["S"], sim.board_track, sim.hmd_tracks["S"],
        truth.hand_eye["S"], BOARD, cam.intrinsics, CFG,
    )
    assert abs(res.clock_offset + 0.075) < 1e-3
    assert res.mean_reproj_error < 0.2
    assert res.residual_count > 100


def test_mobile_offset_noisy_within_spec_tolerance():
    cams, truth, sim = _board_sim(offsets={"S": 0.06}, hmd=1, noise=0.5, duration_s=8.0)
    cam = next(c for c in cams if c.id == "S")
    res = estimate_mobile_offset(
        sim.observations["S"], sim.board_track, sim.hmd_tracks["S"],
        truth.hand_eye["S"], BOARD, cam.intrinsics, CFG,
    )
    assert abs(res.clock_offset - 0.06) < 2e-3


def test_mobile_offset_identifiable_from_ego_motion_alone():
    # frozen board: a static camera has no timing signal, but the tracked
    # camera's own motion still disambiguates the offset
    cams, truth, sim = _board_sim(offsets={"S": 0.04}, hmd=1, speed_mps=0.0)
    cam = next(c for c in cams if c.id == "S")
    res = estimate_mobile_offset(
        sim.observations["S"], sim.board_track, sim.hmd_tracks["S"],
        truth.hand_eye["S"], BOARD, cam.intrinsics, CFG,
    )
    assert abs(res.clock_offset - 0.04) < 1e-3
    with pytest.raises(LowIdentifiability):
        calibrate_static_camera(sim.observations["OL"], sim.board_track, BOARD,
                                cams[0].intrinsics, CFG)


# -------------------------------------------------------------- evaluation


def test_evaluate_calibration_depth_axis_dominates():
    cams, truth, sim = _board_sim(noise=0.5, duration_s=30.0)
    results = {
        c.id: StaticCalibResult(
            extrinsics=truth.extrinsics[c.id], clock_offset=0.0, inlier_ratio=1.0,
            mean_reproj_error=0.0, residual_count=0, camera_id=c.id,
        )
        for c in cams
    }
    holdout = {cid: seq.holdout_split(every=5)[1] for cid, seq in sim.observations.items()}
    report = evaluate_calibration(
        results, holdout, sim.board_track, BOARD, {c.id: c.intrinsics for c in cams}
    )
    assert set(report.per_camera) == {"OL", "OR"}
    for rep in report.per_camera.values():
        assert rep.n_frames >= 40
        assert 0.3 < rep.mean_reproj_px < 0.8
        assert rep.axis_mm["z"] > rep.axis_mm["x"]
        assert rep.axis_mm["z"] > rep.axis_mm["y"]
        assert rep.mean_position_mm > 0
    d = report.to_dict()
    assert d["per_camera"]["OL"]["axis_mm"]["z"] == report.per_camera["OL"].axis_mm["z"]
    assert report.mean_reproj_px == pytest.approx(
        np.mean([r.mean_reproj_px for r in report.per_camera.values()]), rel=0.5
    )
