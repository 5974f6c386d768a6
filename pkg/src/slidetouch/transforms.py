"""Rigid transforms: unit quaternions and poses.

Quaternions are ``(4,)`` float arrays in ``(w, x, y, z)`` order. Rotation
helpers broadcast over leading batch dimensions the same way the SDF code
does, so a pose can transform an ``(N, 3)`` cloud in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

_UNIT_TOL = 1e-9


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _UNIT_TOL:
        raise InvalidArgumentError("cannot normalize a near-zero quaternion")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a*b (apply b first, then a, when used as rotations)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < _UNIT_TOL:
        raise InvalidArgumentError("rotation axis must be nonzero")
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vectors ``v`` with shape (..., 3) by quaternion ``q``."""
    v = np.asarray(v, dtype=float)
    w, x, y, z = q
    u = np.array([x, y, z])
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_between(a, b) -> np.ndarray:
    """Shortest-arc rotation taking direction ``a`` onto direction ``b``."""
    a = np.asarray(a, dtype=float) / np.linalg.norm(a)
    b = np.asarray(b, dtype=float) / np.linalg.norm(b)
    d = float(np.dot(a, b))
    if d > 1.0 - 1e-12:
        return quat_identity()
    if d < -1.0 + 1e-12:
        # 180 degrees: pick any axis orthogonal to a.
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        return quat_from_axis_angle(axis, np.pi)
    axis = np.cross(a, b)
    return quat_normalize(np.concatenate([[1.0 + d], axis]))


def as_readonly(a) -> np.ndarray:
    """Copy to a float array and lock writes (value-type hygiene for dataclasses)."""
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotate by ``orientation`` then translate by ``position``."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        pos = as_readonly(self.position)
        quat = as_readonly(self.orientation)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("pose position must be a finite 3-vector")
        if quat.shape != (4,) or abs(np.linalg.norm(quat) - 1.0) > _UNIT_TOL:
            raise InvalidArgumentError("pose orientation must be a unit quaternion (w, x, y, z)")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_parts(position, orientation=None) -> "Pose":
        q = quat_identity() if orientation is None else quat_normalize(orientation)
        return Pose(np.asarray(position, dtype=float), q)

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply ``other`` first, then ``self``."""
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_normalize(quat_mul(self.orientation, other.orientation)),
        )

    def inverse(self) -> "Pose":
        inv_q = quat_conjugate(self.orientation)
        return Pose(quat_rotate(inv_q, -self.position), inv_q)

    def transform(self, points) -> np.ndarray:
        """Map local points (..., 3) into the parent frame."""
        return quat_rotate(self.orientation, points) + self.position

    def inverse_transform(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return quat_rotate(quat_conjugate(self.orientation), points - self.position)

    def rotate(self, vectors) -> np.ndarray:
        return quat_rotate(self.orientation, vectors)

    def axis(self, index: int) -> np.ndarray:
        """Unit basis vector of this frame expressed in the parent frame."""
        e = np.zeros(3)
        e[index] = 1.0
        return quat_rotate(self.orientation, e)

    def to_dict(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "quaternion_wxyz": [float(v) for v in self.orientation],
        }

    @staticmethod
    def from_dict(data: dict) -> "Pose":
        return Pose.from_parts(
            data.get("position", [0.0, 0.0, 0.0]),
            data.get("quaternion_wxyz", [1.0, 0.0, 0.0, 0.0]),
        )


def orthonormal_frame(x_axis) -> np.ndarray:
    """Deterministic right-handed frame (columns x, y, z) with the given x axis.

    The z axis is the projection of world +z (or +y when x is near vertical),
    which keeps sliding row/column axes stable across nearby contacts.
    """
    x = np.asarray(x_axis, dtype=float)
    x = x / np.linalg.norm(x)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(x, ref))) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    z = ref - np.dot(ref, x) * x
    z = z / np.linalg.norm(z)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def pose_from_frame(position, frame: np.ndarray) -> Pose:
    """Pose whose rotation matrix columns are the given orthonormal frame."""
    m = np.asarray(frame, dtype=float)
    w = np.sqrt(max(0.0, 1.0 + m[0, 0] + m[1, 1] + m[2, 2])) / 2.0
    if w > 1e-6:
        q = np.array(
            [
                w,
                (m[2, 1] - m[1, 2]) / (4 * w),
                (m[0, 2] - m[2, 0]) / (4 * w),
                (m[1, 0] - m[0, 1]) / (4 * w),
            ]
        )
    else:
        # Trace near -1: fall back to the dominant diagonal term.
        i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1e-12, 1.0 + m[i, i] - m[j, j] - m[k, k])) * 2.0
        q = np.zeros(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = s / 4.0
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return Pose(np.asarray(position, dtype=float), quat_normalize(q))
