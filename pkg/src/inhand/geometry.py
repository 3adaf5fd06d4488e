"""Pose representations, pose sampling, angular differences, and the ADD metric.

Planar poses (``Pose2``) are what the reference simulator uses; spatial poses
(``Pose3``, unit-quaternion rotation) are supported by the samplers and
metrics so the estimation layer is not tied to the planar case.

Conventions fixed here and relied on by tests:
  * planar angles are wrapped to (-pi, pi],
  * pose sampling perturbs the rotation in the body frame, ``mean * exp(w)``,
  * quaternions are stored (w, x, y, z) with w >= 0 after normalization.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Pose2",
    "Pose3",
    "PoseNoise",
    "PointCloud",
    "wrap_angle",
    "sample_pose",
    "rotation_angle_between",
    "vector_angle_between",
    "magnitude_difference",
    "add_metric",
    "load_point_cloud",
    "save_point_cloud",
]

_ZERO_VECTOR_TOL = 1e-12
# Angle reported for a direction comparison against a (near-)zero vector.
# Maximally uninformative rather than an error: cost evaluation must not
# abort on a momentarily zero force reading.
DEGENERATE_ANGLE = math.pi / 2

POINT_CLOUD_SCHEMA = "pointcloud-v1"


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose2:
    """Planar rigid transform: rotation by ``angle`` then translation."""

    angle: float
    translation: np.ndarray  # shape (2,)

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if not np.all(np.isfinite(t)) or not math.isfinite(self.angle):
            raise ValueError("non-finite pose")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "angle", wrap_angle(float(self.angle)))

    @staticmethod
    def identity() -> "Pose2":
        return Pose2(0.0, np.zeros(2))

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return Pose2(self.angle + other.angle, self.translation + rot @ other.translation)

    def inverse(self) -> "Pose2":
        c, s = math.cos(-self.angle), math.sin(-self.angle)
        rot = np.array([[c, -s], [s, c]])
        return Pose2(-self.angle, -(rot @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 2) into the parent frame."""
        pts = np.asarray(points, dtype=np.float64)
        c, s = math.cos(self.angle), math.sin(self.angle)
        x, y = pts[..., 0], pts[..., 1]
        out = np.empty_like(pts)
        out[..., 0] = c * x - s * y + self.translation[0]
        out[..., 1] = s * x + c * y + self.translation[1]
        return out

    def as_array(self) -> np.ndarray:
        return np.array([self.translation[0], self.translation[1], self.angle])

    @staticmethod
    def from_array(arr) -> "Pose2":
        arr = np.asarray(arr, dtype=np.float64).reshape(3)
        return Pose2(float(arr[2]), arr[:2])


def _quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = float(np.linalg.norm(q))
    if n < _ZERO_VECTOR_TOL:
        raise ValueError("degenerate quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


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


def _quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _quat_exp(w: np.ndarray) -> np.ndarray:
    """Quaternion for the rotation vector ``w`` (axis * angle)."""
    angle = float(np.linalg.norm(w))
    if angle < 1e-12:
        # first-order series keeps the map smooth through zero
        return _quat_normalize(np.array([1.0, 0.5 * w[0], 0.5 * w[1], 0.5 * w[2]]))
    axis = w / angle
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


def _quat_rotate(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return pts @ rot.T


@dataclass(frozen=True)
class Pose3:
    """Spatial rigid transform with a unit-quaternion rotation (w, x, y, z)."""

    quaternion: np.ndarray  # shape (4,)
    translation: np.ndarray  # shape (3,)

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite pose")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", _quat_normalize(self.quaternion))

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def compose(self, other: "Pose3") -> "Pose3":
        return Pose3(
            _quat_mul(self.quaternion, other.quaternion),
            self.translation + _quat_rotate(self.quaternion, other.translation),
        )

    def inverse(self) -> "Pose3":
        qinv = _quat_conj(self.quaternion)
        return Pose3(qinv, -_quat_rotate(qinv, self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return _quat_rotate(self.quaternion, pts) + self.translation


@dataclass(frozen=True)
class PoseNoise:
    """Isotropic pose-sampling spread: translation in meters, rotation in
    radians of tangent-space standard deviation."""

    sigma_translation: float
    sigma_rotation: float

    def __post_init__(self):
        if self.sigma_translation < 0.0 or self.sigma_rotation < 0.0:
            raise ValueError("noise std devs must be nonnegative")

    def scaled(self, factor: float) -> "PoseNoise":
        return PoseNoise(self.sigma_translation * factor, self.sigma_rotation * factor)


# Initial-pose noise regimes used throughout the experiment harness.
NOISE_REGIMES = {
    "zero": PoseNoise(0.0, 0.0),
    "low": PoseNoise(0.001, 0.01),
    "med": PoseNoise(0.005, 0.1),
    "high": PoseNoise(0.010, 1.0),
}


@dataclass(frozen=True)
class PointCloud:
    """Object-frame sample points used by the ADD tracking-error metric."""

    points: np.ndarray  # shape (n, 2) or (n, 3)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] not in (2, 3):
            raise ValueError("point cloud must be a nonempty (n, 2) or (n, 3) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def sample_pose(mean, noise: PoseNoise, rng: np.random.Generator):
    """Draw one pose around ``mean``.

    Translation gets an isotropic normal offset; the rotation is composed in
    the body frame with ``exp(w)`` for a zero-mean isotropic tangent draw
    ``w``. Zero noise returns ``mean`` exactly.
    """
    if isinstance(mean, Pose2):
        dt = rng.normal(0.0, 1.0, size=2) * noise.sigma_translation
        dr = rng.normal(0.0, 1.0) * noise.sigma_rotation
        return Pose2(mean.angle + dr, mean.translation + dt)
    if isinstance(mean, Pose3):
        dt = rng.normal(0.0, 1.0, size=3) * noise.sigma_translation
        w = rng.normal(0.0, 1.0, size=3) * noise.sigma_rotation
        return Pose3(_quat_mul(mean.quaternion, _quat_exp(w)), mean.translation + dt)
    raise TypeError(f"unsupported pose type {type(mean)!r}")


def rotation_angle_between(ra, rb) -> float:
    """Magnitude of the relative rotation between two rotations, in [0, pi].

    Accepts two planar angles (scalars) or two unit quaternions.
    """
    if np.isscalar(ra) and np.isscalar(rb):
        return abs(wrap_angle(float(rb) - float(ra)))
    qa = _quat_normalize(np.asarray(ra))
    qb = _quat_normalize(np.asarray(rb))
    qrel = _quat_mul(_quat_conj(qa), qb)
    # 2*atan2(|vec|, |w|) is stable for angles near 0 and near pi
    return 2.0 * math.atan2(float(np.linalg.norm(qrel[1:])), abs(float(qrel[0])))


def vector_angle_between(a, b) -> float:
    """Angle between two vectors in [0, pi].

    A (near-)zero operand yields ``DEGENERATE_ANGLE`` instead of an error.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < _ZERO_VECTOR_TOL or nb < _ZERO_VECTOR_TOL:
        return DEGENERATE_ANGLE
    cosv = float(np.dot(a, b)) / (na * nb)
    return math.acos(max(-1.0, min(1.0, cosv)))


def magnitude_difference(a, b) -> float:
    """Signed difference of vector magnitudes, ||a|| - ||b||."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64))
                 - np.linalg.norm(np.asarray(b, dtype=np.float64)))


def add_metric(cloud: PointCloud, pose_gt, pose_est) -> float:
    """Mean distance between cloud points placed at two poses, in meters."""
    if len(cloud) == 0:  # PointCloud forbids this, but guard the raw path
        raise ValueError("empty point cloud")
    pa = pose_gt.apply(cloud.points)
    pb = pose_est.apply(cloud.points)
    return float(np.mean(np.linalg.norm(pa - pb, axis=1)))


def save_point_cloud(cloud: PointCloud, path: str | Path) -> None:
    payload = {"schema": POINT_CLOUD_SCHEMA, "points": cloud.points.tolist()}
    Path(path).write_text(json.dumps(payload))


def load_point_cloud(path: str | Path) -> PointCloud:
    payload = json.loads(Path(path).read_text())
    if payload.get("schema") != POINT_CLOUD_SCHEMA:
        raise ValueError(f"unsupported point cloud schema: {payload.get('schema')!r}")
    return PointCloud(np.asarray(payload["points"], dtype=np.float64))
