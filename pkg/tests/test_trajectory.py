"""Pose track interpolation tests.

Rotation interpolation is checked with an axis-angle scaling oracle: the
slerp of identity toward R(axis, angle) at parameter u must equal
R(axis, u * angle). Endpoint queries must reproduce samples exactly.
"""

import numpy as np
import pytest

from rigpose import (
    CalibrationBoard,
    CornerFrame,
    CornerObservationSequence,
    EmptyTrack,
    OutOfRange,
    PoseTrack,
    RigidTransform,
    TimedPose,
    geodesic_distance,
    quat_from_rotvec,
    random_quaternion,
)
from rigpose.trajectory import interpolate, time_span


def _track(times, rotvecs, trans):
    quats = [quat_from_rotvec(r) for r in rotvecs]
    return PoseTrack(times, quats, trans)


def test_endpoint_returns_sample_exactly():
    rng = np.random.default_rng(0)
    times = [0.0, 1.0, 2.5]
    quats = random_quaternion(rng, 3)
    trans = rng.normal(size=(3, 3))
    tr = PoseTrack(times, quats, trans)
    for i, t in enumerate(times):
        q, p = tr.sample(t)
        assert np.array_equal(p, trans[i])
        assert geodesic_distance(q, quats[i]) == 0.0


def test_translation_midpoint_lerp():
    tr = _track([0.0, 1.0], [[0, 0, 0], [0, 0, 0]], [[0, 0, 0], [10, 0, 0]])
    pose = interpolate(tr, 0.5)
    assert np.allclose(pose.t, [5, 0, 0])


def test_rotation_midpoint_axis_angle_halving():
    # identity -> 90 deg about z; midpoint must be 45 deg about z
    tr = _track([0.0, 1.0], [[0, 0, 0], [0, 0, np.pi / 2]], [[0, 0, 0], [0, 0, 0]])
    pose = interpolate(tr, 0.5)
    want = quat_from_rotvec([0, 0, np.pi / 4])
    assert geodesic_distance(pose.q, want) < 1e-12


def test_rotation_slerp_matches_axis_angle_scaling():
    rng = np.random.default_rng(1)
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.1, 3.0)
        tr = _track([0.0, 1.0], [[0, 0, 0], axis * angle], [[0, 0, 0], [0, 0, 0]])
        u = rng.uniform(0, 1)
        pose = interpolate(tr, u)
        want = quat_from_rotvec(axis * angle * u)
        assert geodesic_distance(pose.q, want) < 1e-9


def test_no_extrapolation():
    tr = _track([0.0, 1.0], [[0, 0, 0], [0, 0, 0]], [[0, 0, 0], [1, 1, 1]])
    with pytest.raises(OutOfRange):
        tr.sample(-0.01)
    with pytest.raises(OutOfRange):
        tr.sample(1.01)
    with pytest.raises(OutOfRange):
        tr.sample([0.5, 2.0])


def test_time_span():
    one = PoseTrack([3.0], [[1, 0, 0, 0]], [[0, 0, 0]])
    assert time_span(one) == (3.0, 3.0)
    three = _track([1.0, 2.0, 5.0], [[0, 0, 0]] * 3, [[0, 0, 0]] * 3)
    assert time_span(three) == (1.0, 5.0)
    # recompute after extending the sample list
    samples = three.samples + [TimedPose(7.0, RigidTransform.identity())]
    extended = PoseTrack.from_samples(samples)
    assert time_span(extended) == (1.0, 7.0)


def test_empty_and_single_sample_errors():
    with pytest.raises(EmptyTrack):
        PoseTrack([], np.zeros((0, 4)), np.zeros((0, 3)))
    one = PoseTrack([0.0], [[1, 0, 0, 0]], [[0, 0, 0]])
    with pytest.raises(EmptyTrack):
        one.sample(0.0)


def test_strictly_increasing_enforced():
    with pytest.raises(ValueError):
        PoseTrack([0.0, 0.0], [[1, 0, 0, 0]] * 2, [[0, 0, 0]] * 2)
    with pytest.raises(ValueError):
        PoseTrack([1.0, 0.5], [[1, 0, 0, 0]] * 2, [[0, 0, 0]] * 2)


def test_continuity_at_shared_sample():
    rng = np.random.default_rng(2)
    tr = PoseTrack([0.0, 1.0, 2.0], random_quaternion(rng, 3), rng.normal(size=(3, 3)))
    eps = 1e-12
    ql, pl = tr.sample(1.0 - eps)
    qr, pr = tr.sample(1.0 + eps)
    assert np.allclose(pl, pr, atol=1e-9)
    assert geodesic_distance(ql, qr) < 1e-9


def test_interpolated_rotation_stays_unit():
    rng = np.random.default_rng(3)
    tr = PoseTrack(np.arange(20.0), random_quaternion(rng, 20), rng.normal(size=(20, 3)))
    q, _ = tr.sample(rng.uniform(0, 19, 1000))
    assert np.allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-9)


def test_time_shift_invariance():
    rng = np.random.default_rng(4)
    times = np.sort(rng.uniform(0, 10, 8))
    times += np.arange(8) * 1e-3  # guard strict ordering
    quats = random_quaternion(rng, 8)
    trans = rng.normal(size=(8, 3))
    tr = PoseTrack(times, quats, trans)
    shifted = tr.shifted(37.5)
    ts = rng.uniform(times[0], times[-1], 50)
    q0, p0 = tr.sample(ts)
    q1, p1 = shifted.sample(ts + 37.5)
    assert np.allclose(p0, p1, atol=1e-9)
    assert np.all(geodesic_distance(q0, q1) < 1e-9)


def test_antipodal_quaternions_canonicalized():
    q = quat_from_rotvec([0, 0, 0.3])
    tr_pos = PoseTrack([0.0, 1.0], [q, q], [[0, 0, 0], [1, 0, 0]])
    tr_neg = PoseTrack([0.0, 1.0], [q, -q], [[0, 0, 0], [1, 0, 0]])
    qa, _ = tr_pos.sample(0.5)
    qb, _ = tr_neg.sample(0.5)
    assert np.array_equal(qa, qb)
    assert qb[0] >= 0


def test_valid_mask_and_gaps():
    tr = _track([0.0, 0.1, 2.0, 2.1], [[0, 0, 0]] * 4, [[0, 0, 0]] * 4)
    ts = np.array([-1.0, 0.05, 1.0, 2.05, 3.0])
    assert tr.valid_mask(ts).tolist() == [False, True, True, True, False]
    # the [0.1, 2.0] segment is a 1.9 s dropout; max_gap filters it
    assert tr.valid_mask(ts, max_gap=0.5).tolist() == [False, True, False, True, False]


# ------------------------------------------------- corners and board


def test_corner_frame_rejects_duplicates():
    with pytest.raises(ValueError):
        CornerFrame(0.0, [1, 1], [[0, 0], [1, 1]])


def test_observation_sequence_ordering_and_flatten():
    frames = [
        CornerFrame(0.0, [0, 1], [[1, 2], [3, 4]]),
        CornerFrame(0.5, [2], [[5, 6]]),
    ]
    seq = CornerObservationSequence("OL", frames)
    times, ids, px = seq.flatten()
    assert times.tolist() == [0.0, 0.0, 0.5]
    assert ids.tolist() == [0, 1, 2]
    assert px.shape == (3, 2)
    assert seq.n_corners == 3
    with pytest.raises(ValueError):
        CornerObservationSequence("OL", frames[::-1])


def test_holdout_split_partitions_frames():
    frames = [CornerFrame(float(i), [0], [[i, i]]) for i in range(10)]
    seq = CornerObservationSequence("C", frames)
    train, hold = seq.holdout_split(every=5)
    assert [f.timestamp for f in hold.frames] == [0.0, 5.0]
    assert len(train) + len(hold) == 10
    got = sorted(f.timestamp for f in train.frames + hold.frames)
    assert got == [float(i) for i in range(10)]


def test_board_grid_geometry():
    board = CalibrationBoard.grid(5, 7, 40.0)
    assert len(board) == 35
    assert np.allclose(board.points.mean(axis=0), 0.0)
    assert np.allclose(board.points[:, 2], 0.0)
    # neighboring ids along a row are one spacing apart in x
    assert np.allclose(board.points[1] - board.points[0], [40.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        CalibrationBoard(points=np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]))
