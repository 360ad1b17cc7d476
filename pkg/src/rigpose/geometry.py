"""SE(3) transforms, pinhole cameras, and rotation metrics.

Conventions used throughout the package:

* rotations are unit quaternions stored scalar-first (w, x, y, z)
* translations are millimeters, angles radians, time seconds
* a ``RigidTransform`` maps points from its source frame into its target
  frame via ``x_out = R(q) @ x_in + t``; camera extrinsics map world to
  camera, so ``extrinsics.apply(x_world)`` is a camera-frame point
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("quaternion norm too small to normalize")
    return q / n


def quat_multiply(a, b):
    """Hamilton product a*b, broadcasting over leading dimensions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q, v):
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q):
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    R = np.stack(
        [
            np.stack([1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)], axis=-1),
            np.stack([2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)], axis=-1),
            np.stack([2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)], axis=-1),
        ],
        axis=-2,
    )
    return R


def quat_from_matrix(R):
    """Quaternion from a 3x3 rotation matrix (Shepperd's branch method)."""
    R = np.asarray(R, dtype=float)
    m00, m01, m02 = R[0]
    m10, m11, m12 = R[1]
    m20, m21, m22 = R[2]
    tr = m00 + m11 + m22
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif m00 >= m11 and m00 >= m22:
        s = np.sqrt(1.0 + m00 - m11 - m22) * 2.0
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif m11 >= m22:
        s = np.sqrt(1.0 + m11 - m00 - m22) * 2.0
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = np.sqrt(1.0 + m22 - m00 - m11) * 2.0
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    return quat_normalize(q)


def quat_from_rotvec(v):
    """Quaternion for a rotation-vector (axis * angle, radians)."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    # sin(a/2)/a, stable at zero:  0.5 * sinc(a / (2*pi))
    half_sinc = 0.5 * np.sinc(angle / (2.0 * np.pi))
    w = np.cos(angle / 2.0)
    return np.concatenate([w, v * half_sinc], axis=-1)


def quat_to_rotvec(q):
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0, -q, q)
    w = q[..., 0]
    u = q[..., 1:]
    s = np.linalg.norm(u, axis=-1)
    angle = 2.0 * np.arctan2(s, w)
    scale = np.where(s > 1e-12, angle / np.where(s > 1e-12, s, 1.0), 2.0)
    return u * scale[..., None]


def quat_slerp(q0, q1, u):
    """Shortest-arc, constant-speed spherical interpolation.

    Broadcasts over leading dimensions; exact (same floats) at u == 0 and
    u == 1 so interpolation at sample timestamps reproduces the samples.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    u = np.asarray(u, dtype=float)
    dot = np.sum(q0 * q1, axis=-1)
    sign = np.where(dot < 0.0, -1.0, 1.0)
    q1s = q1 * sign[..., None]
    dot = np.clip(dot * sign, -1.0, 1.0)

    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    near = sin_theta < 1e-9
    safe_sin = np.where(near, 1.0, sin_theta)
    w0 = np.where(near, 1.0 - u, np.sin((1.0 - u) * theta) / safe_sin)
    w1 = np.where(near, u, np.sin(u * theta) / safe_sin)
    out = w0[..., None] * q0 + w1[..., None] * q1s
    out = out / np.linalg.norm(out, axis=-1, keepdims=True)

    out = np.where((u == 0.0)[..., None], q0, out)
    out = np.where((u == 1.0)[..., None], q1s, out)
    return out


def random_quaternion(rng, n=None):
    """Uniformly distributed unit quaternion(s) (sign not canonicalized)."""
    shape = (4,) if n is None else (n, 4)
    q = rng.normal(size=shape)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


@dataclass(frozen=True)
class RigidTransform:
    """Rigid motion x_out = R(q) @ x_in + t; q is unit, scalar-first."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(4)
        t = np.array(self.t, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite transform components")
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise ValueError("quaternion norm too small to normalize")
        q = q / n
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_rotation_matrix(R, t) -> "RigidTransform":
        return RigidTransform(quat_from_matrix(R), t)

    @staticmethod
    def from_rotvec(rotvec, t) -> "RigidTransform":
        return RigidTransform(quat_from_rotvec(rotvec), t)

    @staticmethod
    def from_matrix(M) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return RigidTransform(quat_from_matrix(M[:3, :3]), M[:3, 3])

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation_matrix()
        M[:3, 3] = self.t
        return M

    def apply(self, points):
        """Transform points of shape (..., 3)."""
        return quat_rotate(self.q, np.asarray(points, dtype=float)) + self.t

    def inverse(self) -> "RigidTransform":
        qc = quat_conjugate(self.q)
        return RigidTransform(qc, -quat_rotate(qc, self.t))

    def to_dict(self) -> dict:
        return {"q": [float(v) for v in self.q], "t": [float(v) for v in self.t]}

    @staticmethod
    def from_dict(d) -> "RigidTransform":
        return RigidTransform(np.array(d["q"], dtype=float), np.array(d["t"], dtype=float))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying b first, then a: compose(a, b).apply(x) == a.apply(b.apply(x))."""
    return RigidTransform(quat_multiply(a.q, b.q), quat_rotate(a.q, b.t) + a.t)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def perturb(t: RigidTransform, xi) -> RigidTransform:
    """Left-perturb t by xi = (rotvec[3], dt[3]): R <- R(xi_r) R, t <- t + xi_t."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    return RigidTransform(quat_multiply(quat_from_rotvec(xi[:3]), t.q), t.t + xi[3:])


def geodesic_distance(q1, q2) -> float | np.ndarray:
    """Rotation angle in [0, pi] between two rotations.

    Accepts quaternions (..., 4); invariant to the sign of either input.
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    rel = quat_multiply(quat_conjugate(q1), q2)
    w = np.abs(rel[..., 0])
    s = np.linalg.norm(rel[..., 1:], axis=-1)
    out = 2.0 * np.arctan2(s, w)
    # exact zero for identical or antipodal inputs (sign-invariance contract)
    same = np.all(q1 == q2, axis=-1) | np.all(q1 == -q2, axis=-1)
    out = np.where(same, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with Brown-Conrady distortion (k1, k2, k3, p1, p2)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def distort(self, xn, yn):
        """Apply distortion to normalized image coordinates."""
        r2 = xn * xn + yn * yn
        radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2 + self.k3 * r2 * r2 * r2
        xd = xn * radial + 2.0 * self.p1 * xn * yn + self.p2 * (r2 + 2.0 * xn * xn)
        yd = yn * radial + self.p1 * (r2 + 2.0 * yn * yn) + 2.0 * self.p2 * xn * yn
        return xd, yd

    def normalized_from_pixels(self, pixels):
        """Undistorted normalized coordinates for pixels (..., 2), fixed-point iteration."""
        px = np.asarray(pixels, dtype=float)
        xd = (px[..., 0] - self.cx) / self.fx
        yd = (px[..., 1] - self.cy) / self.fy
        if self.k1 == self.k2 == self.k3 == self.p1 == self.p2 == 0.0:
            return np.stack([xd, yd], axis=-1)
        xn, yn = xd, yd
        for _ in range(12):
            r2 = xn * xn + yn * yn
            radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2 + self.k3 * r2 * r2 * r2
            dx = 2.0 * self.p1 * xn * yn + self.p2 * (r2 + 2.0 * xn * xn)
            dy = self.p1 * (r2 + 2.0 * yn * yn) + 2.0 * self.p2 * xn * yn
            xn = (xd - dx) / radial
            yn = (yd - dy) / radial
        return np.stack([xn, yn], axis=-1)

    def bearings(self, pixels):
        """Unit camera-frame rays for pixels (..., 2)."""
        n = self.normalized_from_pixels(pixels)
        d = np.concatenate([n, np.ones(n.shape[:-1] + (1,))], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def contains(self, pixels):
        """Boolean mask of pixels inside [0, width) x [0, height)."""
        px = np.asarray(pixels, dtype=float)
        return (
            (px[..., 0] >= 0.0)
            & (px[..., 0] < self.width)
            & (px[..., 1] >= 0.0)
            & (px[..., 1] < self.height)
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "dist": [self.k1, self.k2, self.k3, self.p1, self.p2],
        }

    @staticmethod
    def from_dict(d) -> "CameraIntrinsics":
        k1, k2, k3, p1, p2 = d.get("dist", [0.0] * 5)
        return CameraIntrinsics(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            k1=k1,
            k2=k2,
            k3=k3,
            p1=p1,
            p2=p2,
        )


def _project_unchecked(intr: CameraIntrinsics, pts: np.ndarray) -> np.ndarray:
    z = pts[..., 2]
    xn = pts[..., 0] / z
    yn = pts[..., 1] / z
    xd, yd = intr.distort(xn, yn)
    return np.stack([intr.fx * xd + intr.cx, intr.fy * yd + intr.cy], axis=-1)


def project(intr: CameraIntrinsics, points) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixels (..., 2).

    Raises BehindCamera if any point has z <= 0. Pixels may land outside
    the image; callers apply their own bounds checks.
    """
    pts = np.asarray(points, dtype=float)
    if np.any(pts[..., 2] <= 0.0):
        n_bad = int(np.count_nonzero(pts[..., 2] <= 0.0))
        raise BehindCamera(f"{n_bad} point(s) at or behind the camera plane")
    return _project_unchecked(intr, pts)


def project_points(intr: CameraIntrinsics, points):
    """Like project() but returns (pixels, in_front mask) instead of raising.

    Pixels for points with z <= 0 are filled with NaN.
    """
    pts = np.asarray(points, dtype=float)
    in_front = pts[..., 2] > 0.0
    safe = pts.copy()
    safe[..., 2] = np.where(in_front, pts[..., 2], 1.0)
    px = _project_unchecked(intr, safe)
    px[~in_front] = np.nan
    return px, in_front


@dataclass(frozen=True)
class CameraModel:
    """A calibrated camera: intrinsics, world-to-camera extrinsics, clock offset.

    ``clock_offset`` maps this camera's timestamps to the reference clock:
    t_ref = t_camera + clock_offset. Cameras sharing a ``sync_group`` are
    hardware-synchronized and share a single offset value.
    """

    id: str
    intrinsics: CameraIntrinsics
    extrinsics: RigidTransform = field(default_factory=RigidTransform.identity)
    clock_offset: float = 0.0
    sync_group: str | None = None

    def camera_center(self) -> np.ndarray:
        """Camera position in the world frame."""
        return self.extrinsics.inverse().t
