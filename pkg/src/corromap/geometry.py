"""Rigid transforms, camera model, and point containers.

Conventions: quaternions are (x, y, z, w), Hamilton product, unit norm.
A RigidTransform maps points from its source frame to its target frame,
x_target = R @ x_source + t.  Pixel coordinates are (u, v) with u along
image columns.  Normalized image coordinates are (x/z, y/z) in the camera
frame (z forward), distortion applies in normalized coordinates before the
intrinsic matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEPTH_EPSILON = 1e-6


class NoConvergence(RuntimeError):
    """Iterative inversion failed to reach tolerance."""


class DegenerateConfiguration(ValueError):
    """Point set too small or rank-deficient for the requested fit."""


# ---------------------------------------------------------------------------
# quaternion helpers


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b; rotating by the result applies b then a."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    q = np.asarray(q, dtype=float) / n
    # canonical sign keeps round-trips and comparisons stable
    if q[3] < 0.0:
        q = -q
    return q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's branching)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s,
                      0.25 * s])
    else:
        i = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            q = np.array([0.25 * s,
                          (R[0, 1] + R[1, 0]) / s,
                          (R[0, 2] + R[2, 0]) / s,
                          (R[2, 1] - R[1, 2]) / s])
        elif i == 1:
            s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
            q = np.array([(R[0, 1] + R[1, 0]) / s,
                          0.25 * s,
                          (R[1, 2] + R[2, 1]) / s,
                          (R[0, 2] - R[2, 0]) / s])
        else:
            s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
            q = np.array([(R[0, 2] + R[2, 0]) / s,
                          (R[1, 2] + R[2, 1]) / s,
                          0.25 * s,
                          (R[1, 0] - R[0, 1]) / s])
    return quat_normalize(q)


def quat_from_rotvec(rv: np.ndarray) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        # first-order expansion, exact enough below the normalization noise
        q = np.array([0.5 * rv[0], 0.5 * rv[1], 0.5 * rv[2], 1.0])
        return quat_normalize(q)
    axis = rv / angle
    s = np.sin(0.5 * angle)
    return quat_normalize(np.array([axis[0] * s, axis[1] * s, axis[2] * s,
                                    np.cos(0.5 * angle)]))


def rotvec_from_quat(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(np.asarray(q, dtype=float))
    v = q[:3]
    n = np.linalg.norm(v)
    if n < 1e-12:
        return 2.0 * v
    angle = 2.0 * np.arctan2(n, q[3])
    return v * (angle / n)


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Shortest-arc spherical interpolation, u in [0, 1]."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1, d = -q1, -d
    if d > 1.0 - 1e-10:
        return quat_normalize(q0 + u * (q1 - q0))
    theta = np.arccos(np.clip(d, -1.0, 1.0))
    s = np.sin(theta)
    return quat_normalize((np.sin((1.0 - u) * theta) / s) * q0
                          + (np.sin(u * theta) / s) * q1)


# ---------------------------------------------------------------------------
# rigid transforms


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element stored as unit quaternion + translation."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(4)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite transform components")
        object.__setattr__(self, "q", quat_normalize(q))
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    @staticmethod
    def from_matrix(R: np.ndarray, t: np.ndarray) -> "RigidTransform":
        R = np.asarray(R, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.all(np.isfinite(R)):
            raise ValueError("non-finite rotation")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0.0:
            raise ValueError("matrix is not a proper rotation")
        return RigidTransform(matrix_to_quat(R), t)

    @staticmethod
    def from_rotvec(rv: np.ndarray, t: np.ndarray) -> "RigidTransform":
        return RigidTransform(quat_from_rotvec(rv), t)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    @property
    def translation(self) -> np.ndarray:
        return self.t

    def rotvec(self) -> np.ndarray:
        return rotvec_from_quat(self.q)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.t
        return M

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a 3-vector or an (N, 3) array."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.t
        return p @ self.rotation.T + self.t

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self @ other).apply(x) == self.apply(other.apply(x))."""
        return RigidTransform(quat_multiply(self.q, other.q),
                              self.rotation @ other.t + self.t)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        qc = quat_conjugate(self.q)
        return RigidTransform(qc, -(quat_to_matrix(qc) @ self.t))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(T: RigidTransform) -> RigidTransform:
    return T.inverse()


def transform_point(T: RigidTransform, point: np.ndarray) -> np.ndarray:
    return T.apply(point)


def rotation_angle_between(a: RigidTransform, b: RigidTransform) -> float:
    """Geodesic angle in radians between the rotation parts."""
    rel = quat_multiply(quat_conjugate(a.q), b.q)
    return float(np.linalg.norm(rotvec_from_quat(rel)))


# ---------------------------------------------------------------------------
# camera model


class PixelCoord(NamedTuple):
    u: float
    v: float


@dataclass
class CameraModel:
    """Pinhole intrinsics with radial (k1..k3) and tangential (p1, p2) distortion."""

    alpha_x: float
    alpha_y: float
    gamma: float
    u0: float
    v0: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.alpha_x <= 0.0 or self.alpha_y <= 0.0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([[self.alpha_x, self.gamma, self.u0],
                         [0.0, self.alpha_y, self.v0],
                         [0.0, 0.0, 1.0]])

    def distortion(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.p1, self.p2])


def distort(normalized: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Apply the distortion polynomial to normalized coordinates.

    Accepts a 2-vector or an (N, 2) array and returns the same shape.
    """
    xy = np.asarray(normalized, dtype=float)
    x = xy[..., 0]
    y = xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (camera.k1 + r2 * (camera.k2 + r2 * camera.k3))
    xd = x * radial + 2.0 * camera.p1 * x * y + camera.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + camera.p1 * (r2 + 2.0 * y * y) + 2.0 * camera.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def undistort(distorted: np.ndarray, camera: CameraModel,
              max_iter: int = 50, tol: float = 1e-12,
              damping: float = 1.0) -> np.ndarray:
    """Invert the distortion map by damped fixed-point iteration.

    Args:
        distorted: distorted normalized coordinates, 2-vector or (N, 2).
        camera: distortion source.
        max_iter: iteration cap before NoConvergence.
        tol: infinity-norm residual tolerance in normalized units.
        damping: step fraction in (0, 1]; 1.0 is the plain iteration.

    Raises:
        NoConvergence: residual above tol after max_iter iterations.
    """
    target = np.asarray(distorted, dtype=float)
    x = target[..., 0].copy()
    y = target[..., 1].copy()
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (camera.k1 + r2 * (camera.k2 + r2 * camera.k3))
        tang_x = 2.0 * camera.p1 * x * y + camera.p2 * (r2 + 2.0 * x * x)
        tang_y = camera.p1 * (r2 + 2.0 * y * y) + 2.0 * camera.p2 * x * y
        cand_x = (target[..., 0] - tang_x) / radial
        cand_y = (target[..., 1] - tang_y) / radial
        x += damping * (cand_x - x)
        y += damping * (cand_y - y)
        redistorted = distort(np.stack([x, y], axis=-1), camera)
        if np.max(np.abs(redistorted - target)) < tol:
            return np.stack([x, y], axis=-1)
    raise NoConvergence(f"undistort residual above {tol} after {max_iter} iterations")


def project(point: np.ndarray, extrinsic: RigidTransform,
            camera: CameraModel) -> PixelCoord | None:
    """Project a 3D point through extrinsic, distortion, and intrinsics.

    Returns None when the point lands behind the camera (z <= depth epsilon).
    """
    p = extrinsic.apply(np.asarray(point, dtype=float))
    if p[2] <= DEPTH_EPSILON:
        return None
    xd, yd = distort(p[:2] / p[2], camera)
    return PixelCoord(camera.alpha_x * xd + camera.gamma * yd + camera.u0,
                      camera.alpha_y * yd + camera.v0)


def project_points(points: np.ndarray, extrinsic: RigidTransform,
                   camera: CameraModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of an (N, 3) array.

    Returns:
        (uv, depth, valid): (N, 2) pixel coordinates (NaN where invalid),
        (N,) camera-frame depths, and (N,) bool front-of-camera mask.
    """
    p = extrinsic.apply(np.asarray(points, dtype=float).reshape(-1, 3))
    depth = p[:, 2]
    valid = depth > DEPTH_EPSILON
    uv = np.full((p.shape[0], 2), np.nan)
    if np.any(valid):
        n = p[valid, :2] / depth[valid, None]
        d = distort(n, camera)
        uv[valid, 0] = camera.alpha_x * d[:, 0] + camera.gamma * d[:, 1] + camera.u0
        uv[valid, 1] = camera.alpha_y * d[:, 1] + camera.v0
    return uv, depth, valid


def pixel_rays(uv: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Unit ray directions in the camera frame for (N, 2) pixel coordinates."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    yd = (uv[:, 1] - camera.v0) / camera.alpha_y
    xd = (uv[:, 0] - camera.u0 - camera.gamma * yd) / camera.alpha_x
    n = undistort(np.stack([xd, yd], axis=-1), camera)
    rays = np.concatenate([n, np.ones((n.shape[0], 1))], axis=1)
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# point containers


@dataclass
class PointCloud:
    """Point set with optional per-point color, class label, and weight."""

    points: np.ndarray
    colors: np.ndarray | None = None
    labels: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite points")
        self.points = pts
        n = pts.shape[0]
        if self.colors is not None:
            c = np.asarray(self.colors, dtype=float).reshape(-1, 3)
            if c.shape[0] != n:
                raise ValueError("colors length mismatch")
            self.colors = c
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int32).reshape(-1)
            if lab.shape[0] != n:
                raise ValueError("labels length mismatch")
            self.labels = lab
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.int64).reshape(-1)
            if w.shape[0] != n:
                raise ValueError("weights length mismatch")
            self.weights = w

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, T: RigidTransform) -> "PointCloud":
        return PointCloud(T.apply(self.points), self.colors, self.labels,
                          self.weights)

    def subset(self, index: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.points[index],
            None if self.colors is None else self.colors[index],
            None if self.labels is None else self.labels[index],
            None if self.weights is None else self.weights[index])

    @staticmethod
    def concat(clouds: list["PointCloud"]) -> "PointCloud":
        if not clouds:
            return PointCloud(np.zeros((0, 3)))
        pts = np.vstack([c.points for c in clouds])
        colors = labels = weights = None
        if all(c.colors is not None for c in clouds):
            colors = np.vstack([c.colors for c in clouds])
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        if all(c.weights is not None for c in clouds):
            weights = np.concatenate([c.weights for c in clouds])
        return PointCloud(pts, colors, labels, weights)


@dataclass
class OrganizedScan:
    """Ring-organized range image from a spinning LiDAR.

    ranges[b, a] is the measured range of beam b at azimuth step a, inf for
    no return.  Beam/azimuth angles define the firing directions in the
    sensor frame (x forward, z up).
    """

    timestamp: float
    ranges: np.ndarray
    beam_elevations: np.ndarray
    azimuths: np.ndarray

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.beam_elevations = np.asarray(self.beam_elevations, dtype=float).reshape(-1)
        self.azimuths = np.asarray(self.azimuths, dtype=float).reshape(-1)
        if self.ranges.shape != (self.beam_elevations.size, self.azimuths.size):
            raise ValueError("ranges shape must be (beams, azimuth steps)")

    def directions(self) -> np.ndarray:
        """(beams, azimuths, 3) unit firing directions in the sensor frame."""
        ce = np.cos(self.beam_elevations)[:, None]
        se = np.sin(self.beam_elevations)[:, None]
        ca = np.cos(self.azimuths)[None, :]
        sa = np.sin(self.azimuths)[None, :]
        out = np.empty((self.beam_elevations.size, self.azimuths.size, 3))
        out[..., 0] = ce * ca
        out[..., 1] = ce * sa
        out[..., 2] = se
        return out

    def to_cloud(self) -> PointCloud:
        """Valid returns as sensor-frame points."""
        valid = np.isfinite(self.ranges)
        d = self.directions()
        pts = d[valid] * self.ranges[valid][:, None]
        return PointCloud(pts)
