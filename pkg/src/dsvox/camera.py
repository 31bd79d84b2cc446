"""Pinhole camera, ray generation and point projection.

Convention: the camera looks along -z of its own frame, +x is right, +y is up
and image v grows downward. Ray directions are scaled so that their -z
component in the camera frame is exactly 1; the ray parameter t therefore
equals axial depth.

Continuous pixel coordinates address pixel corners: pixel (i, j) covers
[i, i+1) x [j, j+1) and its center is (i + 0.5, j + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


class CameraError(ValueError):
    """Invalid camera parameters or ray request."""


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def at(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.origin + t[..., None] * self.direction


@dataclass(frozen=True, eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_to_world: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        c2w = np.array(self.cam_to_world, dtype=np.float64)
        if c2w.shape != (4, 4):
            raise CameraError(f"cam_to_world must be 4x4, got {c2w.shape}")
        R = c2w[:3, :3]
        if np.abs(R.T @ R - np.eye(3)).max() >= _ORTHO_TOL or np.linalg.det(R) <= 0:
            raise CameraError("cam_to_world rotation is not a proper rotation")
        if not (self.fx > 0 and self.fy > 0):
            raise CameraError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise CameraError("width/height must be integers")
        if self.width <= 0 or self.height <= 0:
            raise CameraError("width/height must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise CameraError("principal point outside the image")
        c2w.setflags(write=False)
        object.__setattr__(self, "cam_to_world", c2w)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_world[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (
            (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height)
            and np.array_equal(self.cam_to_world, other.cam_to_world)
        )

    def __hash__(self):
        return hash((self.fx, self.fy, self.cx, self.cy, self.width, self.height,
                     self.cam_to_world.tobytes()))

    def ray_directions(self, u, v) -> np.ndarray:
        """World-space directions for continuous pixel coordinates (vectorized)."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        local = np.stack(
            [(u - self.cx) / self.fx, -(v - self.cy) / self.fy, -np.ones_like(u)],
            axis=-1,
        )
        return local @ self.rotation.T

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) of every pixel center in row-major order, each shaped (H, W)."""
        vv, uu = np.meshgrid(np.arange(self.height) + 0.5,
                             np.arange(self.width) + 0.5, indexing="ij")
        return uu, vv


def make_ray(camera: Camera, u: float, v: float, t_near: float, t_far: float) -> Ray:
    if not (0 <= u <= camera.width and 0 <= v <= camera.height):
        raise CameraError(
            f"pixel ({u}, {v}) outside [0, {camera.width}] x [0, {camera.height}]"
        )
    if not (0 < t_near < t_far):
        raise CameraError(f"ray bounds must satisfy 0 < near < far, got {t_near}, {t_far}")
    return Ray(camera.center.copy(), camera.ray_directions(u, v), float(t_near), float(t_far))


def project_point_depth(camera: Camera, x):
    """Project world point(s) into the camera.

    Returns ``(u, v, depth, in_front)``; depth is the axial distance (-z in
    the camera frame). Points outside the image are returned as-is.
    Works for a single point or an (N, 3) array.
    """
    x = np.asarray(x, dtype=np.float64)
    R = camera.rotation
    p_cam = (x - camera.center) @ R  # R^T (x - c), row-vector form
    depth = -p_cam[..., 2]
    in_front = depth > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * p_cam[..., 0] / depth + camera.cx
        v = -camera.fy * p_cam[..., 1] / depth + camera.cy
    return u, v, depth, in_front


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix for a quaternion ``(w, x, y, z)``; normalizes first."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not n > 0:
        raise ValueError("zero-norm quaternion")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_to_quat(R) -> np.ndarray:
    """Inverse of :func:`quat_to_rotation`, returning w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q if q[0] >= 0 else -q


# COLMAP cameras look along +z with y down; ours look along -z with y up.
_FLIP_YZ = np.diag([1.0, -1.0, -1.0])


def camera_from_colmap(qvec, tvec, fx, fy, cx, cy, width, height) -> Camera:
    """Build a Camera from a COLMAP world-to-camera pose."""
    R_w2c = quat_to_rotation(qvec)
    t = np.asarray(tvec, dtype=np.float64)
    c2w = np.eye(4)
    c2w[:3, :3] = R_w2c.T @ _FLIP_YZ
    c2w[:3, 3] = -R_w2c.T @ t
    return Camera(fx, fy, cx, cy, width, height, c2w)


def colmap_pose(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera ``(qvec, tvec)`` in COLMAP convention."""
    R_w2c = (camera.rotation @ _FLIP_YZ).T
    return rotation_to_quat(R_w2c), -R_w2c @ camera.center


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """cam_to_world for a camera at ``eye`` whose -z axis points at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    back = eye - np.asarray(target, dtype=np.float64)
    back /= np.linalg.norm(back)
    right = np.cross(np.asarray(up, dtype=np.float64), back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    c2w = np.eye(4)
    c2w[:3, 0], c2w[:3, 1], c2w[:3, 2], c2w[:3, 3] = right, true_up, back, eye
    return c2w
