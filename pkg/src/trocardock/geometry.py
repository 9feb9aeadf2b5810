"""Rotation representations, error metrics, quaternion averaging and camera math.

Pure functions on numpy arrays; everything here is stateless and thread-safe.
Conventions: rotations are 3x3 matrices acting on column vectors, quaternions
are (w, x, y, z), angles are radians, translations are millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_EPS = 1e-12       # below this a vector is considered zero
PARALLEL_EPS = 1e-6    # residual norm below this means "parallel" in the 6D decode


class GeometryError(ValueError):
    pass


class DegenerateVectorError(GeometryError):
    pass


class BehindCameraError(GeometryError):
    pass


def normalize(v):
    """Return v scaled to unit norm. Raises DegenerateVectorError for ~zero input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n <= NORM_EPS:
        raise DegenerateVectorError(f"cannot normalize near-zero vector (norm={n:g})")
    return v / n


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return (
        np.allclose(R.T @ R, np.eye(3), atol=tol)
        and abs(np.linalg.det(R) - 1.0) < tol
    )


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# 6D rotation representation: r = [z-column | y-column]
# ---------------------------------------------------------------------------

def rot_to_6d(R):
    """Encode a rotation matrix as 6 values: its third column then its second."""
    R = np.asarray(R, dtype=float)
    return np.concatenate([R[:, 2], R[:, 1]])


def sixd_to_rot(r6):
    """Decode 6 raw values into a rotation matrix.

    The first half is normalized into the Z column, the second half is
    Gram-Schmidt orthogonalized into the Y column, X = Y x Z.  Exact inverse
    of rot_to_6d on valid encodings.
    """
    r6 = np.asarray(r6, dtype=float)
    if r6.shape != (6,):
        raise GeometryError(f"expected 6 values, got shape {r6.shape}")
    z = normalize(r6[:3])
    y_raw = r6[3:] - np.dot(r6[3:], z) * z
    ny = np.linalg.norm(y_raw)
    if ny <= PARALLEL_EPS:
        raise DegenerateVectorError("second half is (near-)parallel to the first")
    y = y_raw / ny
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


# ---------------------------------------------------------------------------
# Error metrics on the symmetry axis
# ---------------------------------------------------------------------------

def axis_angle_error(z_gt, z_pred):
    """Angle in [0, pi] between two unit axes (dot product clamped to [-1, 1])."""
    z_gt = np.asarray(z_gt, dtype=float)
    z_pred = np.asarray(z_pred, dtype=float)
    for v in (z_gt, z_pred):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise GeometryError("axis_angle_error expects unit vectors")
    return float(np.arccos(np.clip(np.dot(z_gt, z_pred), -1.0, 1.0)))


def z_mse_loss(z_gt, z_pred):
    """Mean squared componentwise difference; (2 - 2 cos dtheta)/3 for unit inputs."""
    z_gt = np.asarray(z_gt, dtype=float)
    z_pred = np.asarray(z_pred, dtype=float)
    return float(np.mean((z_gt - z_pred) ** 2))


# ---------------------------------------------------------------------------
# Quaternions (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_canonical(q):
    """Sign-normalize: w >= 0; if w == 0 the first nonzero component is positive."""
    q = np.asarray(q, dtype=float)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    raise DegenerateVectorError("zero quaternion")


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=float)
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


def quat_between(a, b):
    """Minimal (roll-free) unit quaternion rotating unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = float(np.dot(a, b))
    if d < -1.0 + 1e-12:
        # antipodal: 180 degrees about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis = axis / np.linalg.norm(axis)
        return np.array([0.0, *axis])
    q = np.array([1.0 + d, *np.cross(a, b)])
    return q / np.linalg.norm(q)


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion (columns = rotated basis vectors)."""
    return np.column_stack([quat_rotate(q, e) for e in np.eye(3)])


def average_quaternions(qs):
    """Average unit quaternions as the dominant eigenvector of sum(q q^T).

    Invariant to sign flips of any input and to input order; the result is
    sign-canonicalized (w >= 0).
    """
    qs = np.asarray(qs, dtype=float)
    if qs.size == 0:
        raise GeometryError("average_quaternions: empty input")
    qs = qs.reshape(-1, 4)
    M = qs.T @ qs
    _, vecs = np.linalg.eigh(M)
    return quat_canonical(vecs[:, -1])


# ---------------------------------------------------------------------------
# Pinhole camera
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside image")


def project(K: CameraIntrinsics, p_cam):
    """Project a camera-frame point (mm) to a fractional pixel (u, v)."""
    x, y, z = np.asarray(p_cam, dtype=float)
    if z <= 0:
        raise BehindCameraError(f"point behind camera (z={z:g})")
    return np.array([K.fx * x / z + K.cx, K.fy * y / z + K.cy])


def backproject_ray(K: CameraIntrinsics, px):
    """Unit ray direction through pixel (u, v), camera frame, origin at camera center."""
    u, v = float(px[0]), float(px[1])
    if not (0 <= u < K.width and 0 <= v < K.height):
        raise GeometryError(f"pixel ({u:g}, {v:g}) outside {K.width}x{K.height} image")
    d = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
    return d / np.linalg.norm(d)


# ---------------------------------------------------------------------------
# Rigid transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation (mm). Maps points from the local frame to the parent."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @staticmethod
    def identity():
        return RigidTransform()

    def apply(self, p):
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def to_flat(self):
        """12 floats: row-major rotation followed by translation."""
        return [*self.rotation.reshape(-1).tolist(), *self.translation.tolist()]

    @staticmethod
    def from_flat(vals):
        vals = np.asarray(vals, dtype=float)
        return RigidTransform(vals[:9].reshape(3, 3), vals[9:12])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return RigidTransform(a.rotation @ b.rotation,
                          a.rotation @ b.translation + a.translation)


def invert(a: RigidTransform) -> RigidTransform:
    rt = a.rotation.T
    return RigidTransform(rt, -rt @ a.translation)
