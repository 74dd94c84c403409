"""Rigid transforms and the kinematic bridge from joint angles to camera poses.

Conventions:
    - A Pose maps points from its local frame to the world frame:
      ``p_world = rotation @ p_local + translation``.
    - Link i applies ``Rot(axis_i, q_i)`` then translates by ``offset_i``
      in the rotated frame. The camera offset is applied after the last link.
    - Translations in meters, angles in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ORTHO_TOL = 1e-9


class KinematicsError(ValueError):
    """Raised for malformed chains or joint vectors outside the chain limits."""


@dataclass(frozen=True, eq=False)
class Pose:
    """Element of SE(3): an orthonormal rotation plus a translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=float).reshape(3, 3)
        trans = np.array(self.translation, dtype=float).reshape(3)
        if not np.allclose(rot @ rot.T, np.eye(3), rtol=0.0, atol=ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def _trusted(cls, rotation: np.ndarray, translation: np.ndarray) -> "Pose":
        # Skips validation; products of valid poses stay valid to round-off.
        pose = object.__new__(cls)
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(pose, "rotation", rotation)
        object.__setattr__(pose, "translation", translation)
        return pose

    @classmethod
    def identity(cls) -> "Pose":
        return cls._trusted(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, xyz: Sequence[float]) -> "Pose":
        return cls._trusted(np.eye(3), np.array(xyz, dtype=float).reshape(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, orthonormalize: bool = True) -> "Pose":
        """Build from a 4x4 homogeneous matrix, projecting the rotation onto SO(3)."""
        m = np.asarray(matrix, dtype=float)
        rot = m[:3, :3]
        if orthonormalize:
            u, _, vt = np.linalg.svd(rot)
            rot = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
        return cls(rot, m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T.copy()
        return Pose._trusted(rt, -(rt @ self.translation))

    def apply(self, point: Sequence[float]) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self) -> int:
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self) -> str:
        t = ", ".join(f"{v:.4f}" for v in self.translation)
        return f"Pose(translation=({t}))"


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a * b``: apply ``b`` first, then ``a``."""
    return Pose._trusted(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def axis_angle_matrix(axis: Sequence[float], angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    k = 1.0 - c
    return np.array(
        [
            [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
            [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
            [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
        ]
    )


def translation_distance(a: Pose, b: Pose) -> float:
    # hypot rescales internally, so tiny nonzero offsets never underflow to 0
    return math.hypot(*(a.translation - b.translation).tolist())


def angular_distance(a: Pose, b: Pose) -> float:
    """Geodesic angle between the two rotations, in [0, pi].

    Uses atan2 on the relative rotation so that near-identical rotations give
    angles at round-off scale instead of the ~1e-8 floor of an arccos form.
    """
    rel = a.rotation.T @ b.rotation
    cos_t = (np.trace(rel) - 1.0) / 2.0
    skew = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
    sin_t = np.linalg.norm(skew) / 2.0
    return float(math.atan2(sin_t, cos_t))


@dataclass(frozen=True)
class Link:
    axis: tuple[float, float, float]
    offset: tuple[float, float, float]
    limits: tuple[float, float] = (-math.pi, math.pi)


@dataclass(frozen=True)
class KinematicChain:
    """Serial chain of revolute joints with fixed link offsets."""

    links: tuple[Link, ...]
    cam_offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self) -> None:
        links = tuple(self.links)
        if not links:
            raise KinematicsError("chain needs at least one link")
        for i, link in enumerate(links):
            if len(link.axis) != 3 or len(link.offset) != 3:
                raise KinematicsError(f"link {i}: axis and offset must be 3-vectors")
            if abs(math.sqrt(sum(v * v for v in link.axis)) - 1.0) > 1e-9:
                raise KinematicsError(f"link {i}: axis is not a unit vector")
            lo, hi = link.limits
            if not lo < hi:
                raise KinematicsError(f"link {i}: joint limits must satisfy lo < hi")
        object.__setattr__(self, "links", links)

    @property
    def dof(self) -> int:
        return len(self.links)

    @property
    def lower(self) -> np.ndarray:
        return np.array([link.limits[0] for link in self.links])

    @property
    def upper(self) -> np.ndarray:
        return np.array([link.limits[1] for link in self.links])

    def within_limits(self, q: np.ndarray) -> bool:
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))

    def check(self, q: Sequence[float]) -> np.ndarray:
        """Validate a joint vector against this chain; returns it as a float array."""
        arr = np.asarray(q, dtype=float)
        if arr.shape != (self.dof,):
            raise KinematicsError(f"expected {self.dof} joint angles, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise KinematicsError("joint angles must be finite")
        if not self.within_limits(arr):
            raise KinematicsError(f"joint configuration {arr.tolist()} violates limits")
        return arr


def reference_chain(link_length: float = 0.5) -> KinematicChain:
    """Desk-scale 3-DOF arm: base yaw about z, shoulder and elbow pitch about y."""
    off = (link_length, 0.0, 0.0)
    return KinematicChain(
        links=(
            Link(axis=(0.0, 0.0, 1.0), offset=(0.0, 0.0, 0.0)),
            Link(axis=(0.0, 1.0, 0.0), offset=off),
            Link(axis=(0.0, 1.0, 0.0), offset=off),
        )
    )


def forward_kinematics(q: Sequence[float], chain: KinematicChain) -> Pose:
    """Camera-to-world pose for joint vector ``q``.

    Pure function of its inputs; joint-limit violations raise instead of clamping.
    """
    arr = chain.check(q)
    rot = np.eye(3)
    pos = np.zeros(3)
    for angle, link in zip(arr, chain.links):
        rot = rot @ axis_angle_matrix(link.axis, float(angle))
        pos = pos + rot @ np.asarray(link.offset, dtype=float)
    cam = chain.cam_offset
    return Pose._trusted(rot @ cam.rotation, rot @ cam.translation + pos)


def position_jacobian(q: Sequence[float], chain: KinematicChain) -> np.ndarray:
    """3xN Jacobian of the camera position with respect to the joint angles."""
    arr = chain.check(q)
    rot = np.eye(3)
    pos = np.zeros(3)
    axes, origins = [], []
    for angle, link in zip(arr, chain.links):
        axes.append(rot @ np.asarray(link.axis, dtype=float))
        origins.append(pos.copy())
        rot = rot @ axis_angle_matrix(link.axis, float(angle))
        pos = pos + rot @ np.asarray(link.offset, dtype=float)
    tip = rot @ chain.cam_offset.translation + pos
    return np.column_stack([np.cross(a, tip - o) for a, o in zip(axes, origins)])


# -- independent quaternion path, used as the bridge oracle -----------------


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
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


def _quat_rotate(quat: np.ndarray, v: np.ndarray) -> np.ndarray:
    conj = quat * np.array([1.0, -1.0, -1.0, -1.0])
    return _quat_mul(_quat_mul(quat, np.concatenate(([0.0], v))), conj)[1:]


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix (Shepperd's method)."""
    tr = np.trace(m)
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q / np.linalg.norm(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quaternion_fk(q: Sequence[float], chain: KinematicChain) -> tuple[np.ndarray, np.ndarray]:
    """FK by quaternion products; returns (unit quaternion, translation).

    Shares no code with ``forward_kinematics`` so it can serve as its oracle.
    """
    arr = chain.check(q)
    quat = np.array([1.0, 0.0, 0.0, 0.0])
    pos = np.zeros(3)
    for angle, link in zip(arr, chain.links):
        half = 0.5 * float(angle)
        step = np.concatenate(([math.cos(half)], math.sin(half) * np.asarray(link.axis, dtype=float)))
        quat = _quat_mul(quat, step)
        pos = pos + _quat_rotate(quat, np.asarray(link.offset, dtype=float))
    cam = chain.cam_offset
    pos = pos + _quat_rotate(quat, cam.translation)
    quat = _quat_mul(quat, quat_from_matrix(cam.rotation))
    return quat / np.linalg.norm(quat), pos


def quaternion_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions, sign-invariant."""
    rel = _quat_mul(qa * np.array([1.0, -1.0, -1.0, -1.0]), qb)
    return float(2.0 * math.atan2(np.linalg.norm(rel[1:]), abs(rel[0])))
