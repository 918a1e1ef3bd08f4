"""Camera pose representation, quaternion algebra, and trajectory interpolation.

Conventions used throughout the package:

* Quaternions are stored as ``(w, x, y, z)`` unit vectors on the canonical
  hemisphere: ``w >= 0``, and if ``w == 0`` the first nonzero of ``(x, y, z)``
  is positive.  ``q`` and ``-q`` encode the same rotation; the canonical form
  keeps regression targets and nearest-pose lookups well defined.
* A flattened pose is exactly 7 scalars in the order
  ``(x, y, z, w, qx, qy, qz)`` — translation first.
* Rotation matrices are camera-to-world; the camera looks down its local -z
  axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRotation, InsufficientKeyposes, InvalidRotation

_HEMISPHERE_EPS = 1e-12


def normalize_quaternion(q) -> np.ndarray:
    """Normalize a 4-vector ``(w, x, y, z)`` to a canonical unit quaternion.

    Raises :class:`DegenerateRotation` for (near-)zero norm input.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have 4 components, got shape {q.shape}")
    norm = float(np.linalg.norm(q))
    if norm < _HEMISPHERE_EPS:
        raise DegenerateRotation("zero-norm quaternion")
    q = q / norm
    return _canonical_hemisphere(q)


def _canonical_hemisphere(q: np.ndarray) -> np.ndarray:
    # w >= 0; on the w == 0 great circle, first nonzero of (x, y, z) positive.
    if q[0] < 0.0:
        return -q
    if q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                return q if c > 0.0 else -q
    return q


@dataclass(frozen=True, eq=False)
class Pose:
    """A 6-DoF camera pose: translation in meters plus a unit quaternion."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = normalize_quaternion(self.rotation)
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    def flatten(self) -> np.ndarray:
        """Return the 7-vector ``(x, y, z, w, qx, qy, qz)``."""
        return np.concatenate([self.translation, self.rotation])

    @classmethod
    def from_vector(cls, v) -> "Pose":
        v = np.asarray(v, dtype=np.float64).reshape(7)
        return cls(translation=v[:3], rotation=v[3:])

    @classmethod
    def identity(cls) -> "Pose":
        return cls(translation=np.zeros(3), rotation=np.array([1.0, 0.0, 0.0, 0.0]))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def to_dict(self) -> dict:
        return {"t": [float(v) for v in self.translation],
                "q": [float(v) for v in self.rotation]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(translation=d["t"], rotation=d["q"])

    def __repr__(self):
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        return f"Pose(t=({t}), q=({q}))"


def quat_to_matrix(q) -> np.ndarray:
    """Convert a unit quaternion ``(w, x, y, z)`` to a 3x3 rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R, atol: float = 1e-4) -> np.ndarray:
    """Convert a rotation matrix to a canonical unit quaternion.

    The matrix must be orthonormal within ``atol`` with positive determinant;
    otherwise :class:`InvalidRotation` is raised.  Uses the trace-branch
    (Shepperd-style) extraction for numerical stability.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise InvalidRotation(f"expected 3x3 matrix, got shape {R.shape}")
    if not np.allclose(R @ R.T, np.eye(3), atol=atol):
        raise InvalidRotation("matrix is not orthonormal")
    if np.linalg.det(R) <= 0:
        raise InvalidRotation("matrix has non-positive determinant")

    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0  # s = 4 qw
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0  # s = 4 qx
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0  # s = 4 qy
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0  # s = 4 qz
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    return normalize_quaternion([w, x, y, z])


def pose_distance(a: Pose, b: Pose, alpha: float = 1.0) -> float:
    """Additive pose pseudometric: ``|t_a - t_b| + alpha * angle(q_a, q_b)``.

    The angular term is the geodesic distance on SO(3),
    ``2 * arccos(|<q_a, q_b>|)`` in [0, pi].  ``alpha`` (rad^-1 * m) weighs
    rotation against translation; 0 ignores rotation entirely.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    dt = float(np.linalg.norm(a.translation - b.translation))
    dot = min(1.0, abs(float(np.dot(a.rotation, b.rotation))))
    theta = 2.0 * math.acos(dot)
    return dt + alpha * theta


def slerp(q0, q1, t: float) -> np.ndarray:
    """Spherical linear interpolation between unit quaternions, shorter arc."""
    q0 = normalize_quaternion(q0)
    q1 = normalize_quaternion(q1)
    dot = float(np.dot(q0, q1))
    # Canonical-hemisphere inputs can still straddle the arc midpoint.
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    dot = min(dot, 1.0)
    if dot > 0.9995:
        # Nearly parallel: lerp + renormalize avoids sin(theta) ~ 0 blowup.
        out = q0 + t * (q1 - q0)
        return _canonical_hemisphere(out / np.linalg.norm(out))
    theta0 = math.acos(dot)
    sin_theta0 = math.sin(theta0)
    s0 = math.sin((1.0 - t) * theta0) / sin_theta0
    s1 = math.sin(t * theta0) / sin_theta0
    out = s0 * q0 + s1 * q1
    return _canonical_hemisphere(out / np.linalg.norm(out))


@dataclass(frozen=True)
class Trajectory:
    """An ordered list of poses rendered frame by frame."""

    poses: tuple = field(default_factory=tuple)

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise InsufficientKeyposes("trajectory must contain at least one pose")
        object.__setattr__(self, "poses", poses)

    @property
    def frame_count(self) -> int:
        return len(self.poses)


def interpolate_trajectory(keyposes, frames_per_segment: int) -> Trajectory:
    """Interpolate keyposes into a dense trajectory.

    Translations interpolate linearly, rotations by slerp.  The output has
    ``(len(keyposes) - 1) * frames_per_segment + 1`` frames; the first and
    last frames equal the first and last keyposes.
    """
    keyposes = list(keyposes)
    if len(keyposes) < 2:
        raise InsufficientKeyposes(f"need >= 2 keyposes, got {len(keyposes)}")
    if frames_per_segment < 1:
        raise ValueError("frames_per_segment must be >= 1")
    frames = []
    for a, b in zip(keyposes[:-1], keyposes[1:]):
        for i in range(frames_per_segment):
            t = i / frames_per_segment
            frames.append(Pose(
                translation=(1.0 - t) * a.translation + t * b.translation,
                rotation=slerp(a.rotation, b.rotation, t),
            ))
    frames.append(keyposes[-1])
    return Trajectory(poses=tuple(frames))


def trajectory_request_to_json(keyposes, frames_per_segment: int) -> str:
    """Serialize keyposes to the trajectory JSON wire format."""
    return json.dumps({
        "keyposes": [p.to_dict() for p in keyposes],
        "frames_per_segment": int(frames_per_segment),
    }, indent=2)


def trajectory_request_from_json(text: str):
    """Parse the trajectory JSON wire format into (keyposes, frames_per_segment)."""
    obj = json.loads(text)
    keyposes = [Pose.from_dict(d) for d in obj["keyposes"]]
    return keyposes, int(obj["frames_per_segment"])
