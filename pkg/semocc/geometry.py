"""
Rigid transforms, pinhole cameras and point projection.

- Rotations are 3x3 matrices (no quaternions); translations in meters.
- Camera frame: x right, y down, z forward. Pixel (i, j) covers [i, i+1) x [j, j+1).
- Behind-camera means depth <= 0; such points have no projection.
- All values are immutable NamedTuples and safe to share across workers.
"""

from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

ORTHONORMAL_TOL = 1e-6


class RigidTransform(NamedTuple):
    """p -> rotation @ p + translation."""
    rotation: np.ndarray     # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (3,), meters


class CameraModel(NamedTuple):
    """Pinhole camera; cam_from_ego maps ego-frame points into the camera frame."""
    intrinsics: np.ndarray   # (3, 3) upper-triangular K, pixels
    cam_from_ego: RigidTransform
    width: int
    height: int


class EgoPose(NamedTuple):
    world_from_ego: RigidTransform
    frame_index: int


def make_transform(rotation, translation, tol: float = ORTHONORMAL_TOL) -> RigidTransform:
    """Validate and freeze a rotation/translation pair."""
    r = np.array(rotation, dtype=np.float64).reshape(3, 3)
    t = np.array(translation, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
        raise ValueError("Transform entries must be finite")
    if np.max(np.abs(r @ r.T - np.eye(3))) > tol:
        raise ValueError("Rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("Rotation determinant must be +1")
    r.setflags(write=False)
    t.setflags(write=False)
    return RigidTransform(r, t)


def identity() -> RigidTransform:
    return make_transform(np.eye(3), np.zeros(3))


def translation(x: float, y: float, z: float) -> RigidTransform:
    return make_transform(np.eye(3), (x, y, z))


def from_matrix(m) -> RigidTransform:
    """From a 4x4 homogeneous matrix (row-major)."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (4, 4):
        raise ValueError(f"Expected a 4x4 matrix, got shape {m.shape}")
    if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > ORTHONORMAL_TOL:
        raise ValueError("Bottom row of a rigid 4x4 matrix must be (0, 0, 0, 1)")
    return make_transform(m[:3, :3], m[:3, 3])


def to_matrix(t: RigidTransform) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = t.rotation
    m[:3, 3] = t.translation
    return m


def yaw_transform(yaw: float, center) -> RigidTransform:
    """Rotation about +z by yaw (radians) followed by translation to center."""
    r = Rotation.from_euler("z", float(yaw)).as_matrix()
    return make_transform(r, center)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """(a o b)(p) = a(b(p))."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    return make_transform(r, t)


def invert(t: RigidTransform) -> RigidTransform:
    r_inv = t.rotation.T
    return make_transform(r_inv, -(r_inv @ t.translation))


def apply(t: RigidTransform, points) -> np.ndarray:
    """Apply to one point (3,) or a batch (N, 3)."""
    p = np.asarray(points, dtype=np.float64)
    return p @ t.rotation.T + t.translation


def make_camera(intrinsics, cam_from_ego: RigidTransform, width: int, height: int) -> CameraModel:
    k = np.array(intrinsics, dtype=np.float64).reshape(3, 3)
    if k[2, 2] != 1.0:
        raise ValueError("Intrinsics K[2][2] must be 1")
    if not (k[0, 0] > 0 and k[1, 1] > 0):
        raise ValueError("Focal lengths K[0][0], K[1][1] must be positive")
    if k[1, 0] != 0 or k[2, 0] != 0 or k[2, 1] != 0:
        raise ValueError("Intrinsics must be upper-triangular")
    if int(width) <= 0 or int(height) <= 0:
        raise ValueError(f"Image size must be positive, got {width}x{height}")
    k.setflags(write=False)
    return CameraModel(k, cam_from_ego, int(width), int(height))


def pinhole_intrinsics(fx: float, fy: float, cx: float, cy: float) -> np.ndarray:
    return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """
    cam_from_ego rotation for a camera whose optical axis points along `forward`
    (ego frame) with image-up along `up`.
    """
    z = np.asarray(forward, dtype=np.float64)
    z = z / np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-9:
        raise ValueError("Camera forward direction is parallel to up")
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])


def camera_center(cam: CameraModel) -> np.ndarray:
    """Camera optical center in the ego frame."""
    return invert(cam.cam_from_ego).translation


def project(cam: CameraModel, point_ego) -> Optional[Tuple[float, float, float]]:
    """(u, v, depth) of K(R p + t); None when depth <= 0."""
    p = np.asarray(point_ego, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("Point must be finite")
    uv, depth = project_points(cam, p[None, :])
    if not depth[0] > 0:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(depth[0])


def project_points(cam: CameraModel, points_ego) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized projection. Returns (uv (N, 2), depth (N,)); uv is NaN where
    depth <= 0.
    """
    p = np.asarray(points_ego, dtype=np.float64).reshape(-1, 3)
    pc = apply(cam.cam_from_ego, p)
    h = pc @ cam.intrinsics.T
    depth = h[:, 2]
    uv = np.full((p.shape[0], 2), np.nan)
    front = depth > 0
    uv[front] = h[front, :2] / depth[front, None]
    return uv, depth


def pixel_rays(cam: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit ray directions (H*W, 3) in the ego frame through every pixel center,
    row-major, plus the shared origin (3,).
    """
    jj, ii = np.meshgrid(np.arange(cam.height) + 0.5, np.arange(cam.width) + 0.5, indexing="ij")
    pix = np.stack([ii.ravel(), jj.ravel(), np.ones(ii.size)], axis=1)
    d_cam = pix @ np.linalg.inv(cam.intrinsics).T
    d_ego = d_cam @ cam.cam_from_ego.rotation  # R^T applied row-wise
    d_ego /= np.linalg.norm(d_ego, axis=1, keepdims=True)
    return d_ego, camera_center(cam)
