"""Rigid transforms, pinhole cameras, point clouds and normal estimation.

All lengths are meters. Camera frames follow the usual computer-vision
convention: x right, y down, z along the optical axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class InvalidDepthError(ValueError):
    """Raised when a pixel has no usable depth."""


def normalize(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / n


def orthonormal_basis(u):
    """Return two unit vectors (a, b) such that (a, b, u) is right-handed.

    Works on a single vector or an (N, 3) batch. The choice is a fixed
    function of u, so it is *not* rigidly equivariant.
    """
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    helper = np.zeros_like(u)
    # pick the world axis least aligned with u
    idx = np.argmin(np.abs(u), axis=1)
    helper[np.arange(len(u)), idx] = 1.0
    a = np.cross(helper, u)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = np.cross(u, a)
    if single:
        return a[0], b[0]
    return a, b


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation + translation, mapping source-frame points to target frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("transform has non-finite entries")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        if m.shape == (12,):
            m = m.reshape(3, 4)
        if m.shape not in ((4, 4), (3, 4)):
            raise ValueError(f"expected a 4x4, 3x4 or 12-vector pose, got shape {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=(0.0, 0.0, 0.0)):
        axis = normalize(axis)
        K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        R = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
        return cls(R, translation)

    @classmethod
    def random(cls, rng, translation_scale=1.0):
        # uniform rotation via a random unit quaternion
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        R = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
        return cls(R, rng.uniform(-translation_scale, translation_scale, size=3))

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def row_major_12(self):
        return self.matrix()[:3].reshape(12)

    def apply(self, points):
        return transform_points(self, points)

    def apply_directions(self, dirs):
        return np.asarray(dirs, dtype=np.float64) @ self.rotation.T

    def inverse(self):
        return invert_transform(self)

    def __matmul__(self, other):
        return compose_transforms(self, other)


def transform_points(T: RigidTransform, points):
    points = np.asarray(points, dtype=np.float64)
    return points @ T.rotation.T + T.translation


def compose_transforms(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return a∘b, i.e. apply b first, then a."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert_transform(T: RigidTransform) -> RigidTransform:
    Rt = T.rotation.T
    return RigidTransform(Rt, -Rt @ T.translation)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-to-world pose of a camera at `eye` whose optical axis hits `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    z = normalize(np.asarray(target, dtype=np.float64) - eye)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(normalize(up), z)) > 1 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    x = normalize(np.cross(z, up))
    # image y points "down", away from up
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def default(cls, width=640, height=480, fov_x_deg=60.0):
        f = 0.5 * width / np.tan(np.radians(fov_x_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height)

    def matrix(self):
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def pixel_rays(self):
        """Unnormalized camera-frame ray directions (z = 1) for every pixel, shape (H, W, 3)."""
        u, v = np.meshgrid(np.arange(self.width, dtype=np.float64), np.arange(self.height, dtype=np.float64))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)


def project(intr: CameraIntrinsics, points):
    """Camera-frame points -> (u, v) pixel coordinates (float)."""
    p = np.asarray(points, dtype=np.float64)
    u = p[..., 0] * intr.fx / p[..., 2] + intr.cx
    v = p[..., 1] * intr.fy / p[..., 2] + intr.cy
    return np.stack([u, v], axis=-1)


def backproject(depth, intr: CameraIntrinsics, pixel):
    """3D camera-frame point seen at integer pixel (u, v)."""
    u, v = pixel
    d = float(np.asarray(depth)[v, u])
    if not d > 0:
        raise InvalidDepthError(f"no valid depth at pixel ({u}, {v})")
    return np.array([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d])


def depth_to_points(depth, intr: CameraIntrinsics):
    """Organized (H, W, 3) camera-frame points; invalid pixels are NaN."""
    depth = np.asarray(depth, dtype=np.float64)
    rays = intr.pixel_rays()
    pts = rays * depth[..., None]
    pts[depth <= 0] = np.nan
    return pts


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None
    labels: np.ndarray | None = None
    # False where a normal could not be estimated; such normals are zero
    valid: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(pts):
                raise ValueError("normals and points must be parallel arrays")
            object.__setattr__(self, "normals", n)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if len(lab) != len(pts):
                raise ValueError("labels and points must be parallel arrays")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return len(self.points)

    def transformed(self, T: RigidTransform):
        normals = None if self.normals is None else T.apply_directions(self.normals)
        return PointCloud(T.apply(self.points), normals, self.labels, self.valid)


def _plane_normals(neighborhoods, rel_tol=1e-10):
    """Smallest-eigenvector normals of (N, k, 3) neighborhoods plus a validity mask.

    A neighborhood is degenerate when its second eigenvalue vanishes
    relative to the largest, i.e. the points are (near) collinear.
    """
    centered = neighborhoods - neighborhoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]
    valid = w[:, 1] > rel_tol * np.maximum(w[:, 2], np.finfo(float).tiny)
    return normals, valid


def estimate_normals(cloud: PointCloud, k: int = 30, view_point=(0.0, 0.0, 0.0)) -> PointCloud:
    """Local plane-fit normals over the k nearest neighbours, facing `view_point`."""
    pts = cloud.points
    if len(pts) < k:
        raise ValueError(f"need at least k={k} points, got {len(pts)}")
    _, idx = cKDTree(pts).query(pts, k=k)
    normals, valid = _plane_normals(pts[idx])
    normals = orient_towards(normals, pts, view_point)
    normals[~valid] = 0.0
    return PointCloud(pts, normals, cloud.labels, valid)


def orient_towards(normals, points, view_point):
    flip = np.einsum("ij,ij->i", normals, np.asarray(view_point, dtype=np.float64) - points) < 0
    normals = normals.copy()
    normals[flip] *= -1
    return normals
