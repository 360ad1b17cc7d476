"""Timestamped pose tracks, corner observations, and calibration boards.

A ``PoseTrack`` is a strictly time-ordered sequence of rigid poses with
piece-wise interpolation: linear in translation, spherical (shortest arc)
in rotation. Quaternions are canonicalized to a non-negative scalar part
on ingestion so antipodal inputs interpolate identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrack, OutOfRange
from .geometry import RigidTransform, quat_slerp


@dataclass(frozen=True)
class TimedPose:
    timestamp: float
    pose: RigidTransform


class PoseTrack:
    """Ordered pose samples with interpolation between neighbors."""

    def __init__(self, times, quats, trans, frame_from="a", frame_to="b"):
        times = np.asarray(times, dtype=float).reshape(-1)
        quats = np.asarray(quats, dtype=float).reshape(-1, 4)
        trans = np.asarray(trans, dtype=float).reshape(-1, 3)
        if times.size == 0:
            raise EmptyTrack("pose track has no samples")
        if not (len(times) == len(quats) == len(trans)):
            raise ValueError("times, quats and trans must have equal length")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(quats)) and np.all(np.isfinite(trans))):
            raise ValueError("non-finite track data")
        norms = np.linalg.norm(quats, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ValueError("zero quaternion in track")
        quats = quats / norms
        # canonical sign: non-negative scalar part
        quats = np.where(quats[:, :1] < 0.0, -quats, quats)
        self._times = times
        self._quats = quats
        self._trans = trans
        self.frame_from = frame_from
        self.frame_to = frame_to

    @classmethod
    def from_samples(cls, samples, frame_from="a", frame_to="b"):
        samples = list(samples)
        if not samples:
            raise EmptyTrack("pose track has no samples")
        times = [s.timestamp for s in samples]
        quats = [s.pose.q for s in samples]
        trans = [s.pose.t for s in samples]
        return cls(times, quats, trans, frame_from=frame_from, frame_to=frame_to)

    def __len__(self):
        return len(self._times)

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def samples(self) -> list[TimedPose]:
        return [
            TimedPose(float(t), RigidTransform(q, p))
            for t, q, p in zip(self._times, self._quats, self._trans)
        ]

    def time_span(self) -> tuple[float, float]:
        return float(self._times[0]), float(self._times[-1])

    def sample(self, ts):
        """Vectorized interpolation at timestamps ts -> (quats (N,4), trans (N,3)).

        Raises OutOfRange if any timestamp falls outside the span; exact at
        sample timestamps.
        """
        if len(self) < 2:
            raise EmptyTrack("interpolation needs at least 2 samples")
        ts = np.asarray(ts, dtype=float)
        scalar = ts.ndim == 0
        ts = np.atleast_1d(ts)
        lo, hi = self._times[0], self._times[-1]
        if np.any((ts < lo) | (ts > hi)):
            raise OutOfRange(f"timestamp outside track span [{lo}, {hi}]")
        idx = np.searchsorted(self._times, ts, side="right") - 1
        idx = np.clip(idx, 0, len(self._times) - 2)
        t0 = self._times[idx]
        t1 = self._times[idx + 1]
        u = (ts - t0) / (t1 - t0)
        q = quat_slerp(self._quats[idx], self._quats[idx + 1], u)
        p = self._trans[idx] + u[:, None] * (self._trans[idx + 1] - self._trans[idx])
        # keep sample timestamps bit-exact
        at_end = u == 1.0
        if np.any(at_end):
            p = np.where(at_end[:, None], self._trans[idx + 1], p)
        if scalar:
            return q[0], p[0]
        return q, p

    def pose_at(self, t: float) -> RigidTransform:
        q, p = self.sample(float(t))
        return RigidTransform(q, p)

    def segment_gap(self, ts) -> np.ndarray:
        """Duration of the sample interval bracketing each query time."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.searchsorted(self._times, ts, side="right") - 1
        idx = np.clip(idx, 0, max(len(self._times) - 2, 0))
        if len(self) < 2:
            return np.zeros_like(ts)
        return self._times[idx + 1] - self._times[idx]

    def valid_mask(self, ts, max_gap=None) -> np.ndarray:
        """True where ts is inside the span (and its segment is <= max_gap)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        ok = (ts >= self._times[0]) & (ts <= self._times[-1])
        if max_gap is not None and len(self) >= 2:
            ok &= self.segment_gap(ts) <= max_gap
        return ok

    def shifted(self, dt: float) -> "PoseTrack":
        """Same poses with all timestamps moved by dt."""
        return PoseTrack(
            self._times + dt, self._quats, self._trans, self.frame_from, self.frame_to
        )


def interpolate(track: PoseTrack, t: float) -> RigidTransform:
    """Pose at time t; translation lerp, rotation shortest-arc slerp."""
    return track.pose_at(t)


def time_span(track: PoseTrack) -> tuple[float, float]:
    return track.time_span()


@dataclass(frozen=True)
class CornerFrame:
    """Detected board corners of one image: point ids index board points."""

    timestamp: float
    point_ids: np.ndarray
    pixels: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.point_ids, dtype=int).reshape(-1)
        px = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        if len(ids) != len(px):
            raise ValueError("point_ids and pixels must have equal length")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("duplicate point id within a frame")
        object.__setattr__(self, "point_ids", ids)
        object.__setattr__(self, "pixels", px)

    def __len__(self):
        return len(self.point_ids)


class CornerObservationSequence:
    """Per-camera corner detections, strictly ordered by timestamp."""

    def __init__(self, camera_id: str, frames):
        frames = list(frames)
        times = [f.timestamp for f in frames]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError("frame timestamps must be strictly increasing")
        self.camera_id = camera_id
        self.frames = frames

    def __len__(self):
        return len(self.frames)

    @property
    def n_corners(self) -> int:
        return sum(len(f) for f in self.frames)

    def flatten(self):
        """All corners as flat arrays: (times (M,), point_ids (M,), pixels (M,2))."""
        if not self.frames:
            return np.zeros(0), np.zeros(0, dtype=int), np.zeros((0, 2))
        times = np.concatenate([np.full(len(f), f.timestamp) for f in self.frames])
        ids = np.concatenate([f.point_ids for f in self.frames])
        px = np.concatenate([f.pixels for f in self.frames])
        return times, ids, px

    def holdout_split(self, every: int = 5):
        """(train, holdout) where every k-th frame is held out."""
        train = [f for i, f in enumerate(self.frames) if i % every != 0]
        hold = [f for i, f in enumerate(self.frames) if i % every == 0]
        return (
            CornerObservationSequence(self.camera_id, train),
            CornerObservationSequence(self.camera_id, hold),
        )


@dataclass(frozen=True)
class CalibrationBoard:
    """Rigid grid of 3D target points in the board frame (point id = row index)."""

    points: np.ndarray
    rows: int = 0
    cols: int = 0
    spacing_mm: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(pts) < 4:
            raise ValueError("board needs at least 4 points")
        centered = pts - pts.mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        if s[1] <= 1e-9 * max(s[0], 1.0):
            raise ValueError("board points are collinear")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def grid(cls, rows: int, cols: int, spacing_mm: float) -> "CalibrationBoard":
        """Planar rows x cols grid centered at the board origin."""
        r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        x = (c.ravel() - (cols - 1) / 2.0) * spacing_mm
        y = (r.ravel() - (rows - 1) / 2.0) * spacing_mm
        pts = np.stack([x, y, np.zeros_like(x)], axis=1)
        return cls(points=pts, rows=rows, cols=cols, spacing_mm=spacing_mm)

    def __len__(self):
        return len(self.points)
