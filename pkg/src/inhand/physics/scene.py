"""Scene description: gripper geometry, object shapes, simulation parameters.

A scene is everything needed to reconstruct a simulation apart from its
dynamic state. Scenes serialize to JSON (schema ``scene-v1``) and carry a
stable content hash so recorded trajectories can assert they are replayed
against the same world.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "PARAM_NAMES",
    "SimParams",
    "ParamBounds",
    "GripperSpec",
    "ObjectSpec",
    "SceneSpec",
    "OBJECT_LIBRARY",
    "default_scene",
    "load_scene",
    "save_scene",
    "polygon_area",
    "polygon_centroid",
    "polygon_inertia",
]

# Estimated physical parameters, in fixed order. Code that maps parameter
# vectors to arrays relies on this ordering.
PARAM_NAMES = (
    "mass",
    "inertia",
    "friction",
    "restitution",
    "kp",
    "kd",
    "contact_stiffness",
)

NUM_PARAMS = len(PARAM_NAMES)


def polygon_area(vertices: np.ndarray) -> float:
    """Signed area (positive for counter-clockwise winding)."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(0.5 * np.sum(x * yn - xn * y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def polygon_inertia(vertices: np.ndarray, mass: float) -> float:
    """Moment of inertia about the centroid for a uniform lamina."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    num = np.sum(cross * (x * x + x * xn + xn * xn + y * y + y * yn + yn * yn))
    i_origin = mass * num / (12.0 * a)
    c = polygon_centroid(v)
    return float(i_origin - mass * float(c @ c))


def _check_convex_ccw(vertices: np.ndarray) -> None:
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
        raise ValueError("polygon needs at least 3 planar vertices")
    n = v.shape[0]
    for i in range(n):
        e1 = v[(i + 1) % n] - v[i]
        e2 = v[(i + 2) % n] - v[(i + 1) % n]
        if e1[0] * e2[1] - e1[1] * e2[0] <= 0:
            raise ValueError("polygon must be convex with counter-clockwise winding")


@dataclass(frozen=True)
class SimParams:
    """The estimated parameter vector (object + contact + controller)."""

    mass: float = 0.10
    inertia: float = 4.0e-5
    friction: float = 0.8
    restitution: float = 0.05
    kp: float = 10.0
    kd: float = 0.5
    contact_stiffness: float = 3500.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            val = getattr(self, name)
            if not np.isfinite(val):
                raise ValueError(f"non-finite parameter {name}")
        if self.mass <= 0 or self.inertia <= 0:
            raise ValueError("mass and inertia must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    @staticmethod
    def from_array(theta) -> "SimParams":
        theta = np.asarray(theta, dtype=np.float64).reshape(NUM_PARAMS)
        return SimParams(**{n: float(theta[i]) for i, n in enumerate(PARAM_NAMES)})

    def replace(self, **kw) -> "SimParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {n: float(getattr(self, n)) for n in PARAM_NAMES}

    @staticmethod
    def from_dict(d: dict) -> "SimParams":
        return SimParams(**{n: float(d[n]) for n in PARAM_NAMES})


@dataclass(frozen=True)
class ParamBounds:
    """Box constraints that keep sampled parameter vectors physical."""

    lower: np.ndarray = field(default_factory=lambda: np.array(
        [0.02, 1.0e-6, 0.05, 0.0, 2.0, 0.05, 500.0]))
    upper: np.ndarray = field(default_factory=lambda: np.array(
        [0.60, 2.0e-3, 1.50, 0.5, 40.0, 4.0, 20000.0]))

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).reshape(NUM_PARAMS).copy()
        hi = np.asarray(self.upper, dtype=np.float64).reshape(NUM_PARAMS).copy()
        if not np.all(lo <= hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=np.float64), self.lower, self.upper)

    def contains(self, theta: np.ndarray) -> bool:
        t = np.asarray(theta, dtype=np.float64)
        return bool(np.all(t >= self.lower) and np.all(t <= self.upper))


@dataclass(frozen=True)
class GripperSpec:
    """Two planar fingers, each a 2-revolute-joint chain hanging from a fixed base.

    Link k of finger f is a capsule of half-width ``link_radius``; the distal
    end of link 1 carries the circular fingertip sensor of radius
    ``tip_radius``.
    """

    anchors: np.ndarray = field(default_factory=lambda: np.array(
        [[-0.08, 0.19], [0.08, 0.19]]))
    base_angles: np.ndarray = field(default_factory=lambda: np.array(
        [-np.pi / 2.0, -np.pi / 2.0]))
    link_lengths: np.ndarray = field(default_factory=lambda: np.array([0.11, 0.09]))
    link_masses: np.ndarray = field(default_factory=lambda: np.array([0.06, 0.04]))
    link_radius: float = 0.008
    tip_radius: float = 0.012
    joint_limit: float = 2.2       # symmetric, rad
    max_torque: float = 0.6        # N m
    # elbows-out rest pose keeping the tips clear of table and object
    home_joints: np.ndarray = field(default_factory=lambda: np.array(
        [-0.8, 0.8, 0.8, -0.8]))

    def __post_init__(self):
        for name in ("anchors", "base_angles", "link_lengths", "link_masses",
                     "home_joints"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=np.float64).copy())
        if self.anchors.shape != (2, 2):
            raise ValueError("expected two planar anchors")
        if self.link_lengths.shape != (2,) or np.any(self.link_lengths <= 0):
            raise ValueError("expected two positive link lengths")
        if self.home_joints.shape != (4,):
            raise ValueError("expected four home joint angles")

    @property
    def num_fingers(self) -> int:
        return 2

    @property
    def num_joints(self) -> int:
        return 4

    def to_dict(self) -> dict:
        return {
            "anchors": self.anchors.tolist(),
            "base_angles": self.base_angles.tolist(),
            "link_lengths": self.link_lengths.tolist(),
            "link_masses": self.link_masses.tolist(),
            "link_radius": self.link_radius,
            "tip_radius": self.tip_radius,
            "joint_limit": self.joint_limit,
            "max_torque": self.max_torque,
            "home_joints": self.home_joints.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "GripperSpec":
        return GripperSpec(
            anchors=np.asarray(d["anchors"]),
            base_angles=np.asarray(d["base_angles"]),
            link_lengths=np.asarray(d["link_lengths"]),
            link_masses=np.asarray(d["link_masses"]),
            link_radius=float(d["link_radius"]),
            tip_radius=float(d["tip_radius"]),
            joint_limit=float(d["joint_limit"]),
            max_torque=float(d["max_torque"]),
            home_joints=np.asarray(d["home_joints"]),
        )


@dataclass(frozen=True)
class ObjectSpec:
    """A convex polygon, vertices counter-clockwise in the body frame."""

    name: str
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).copy()
        _check_convex_ccw(v)
        object.__setattr__(self, "vertices", v)

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    def inertia_for_mass(self, mass: float) -> float:
        return polygon_inertia(self.vertices, mass)

    def to_dict(self) -> dict:
        return {"name": self.name, "vertices": self.vertices.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "ObjectSpec":
        return ObjectSpec(name=str(d["name"]), vertices=np.asarray(d["vertices"]))


def _rect(w: float, h: float) -> np.ndarray:
    return np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])


# Convex approximations of the three benchmark objects (metres, body frame,
# centroid at origin). The elongated bar stands in for the curved fruit shape;
# a planar convex solver cannot represent the concavity.
OBJECT_LIBRARY: dict[str, ObjectSpec] = {
    "spam": ObjectSpec("spam", _rect(0.06, 0.04)),
    "foam": ObjectSpec("foam", _rect(0.04, 0.04)),
    # narrow bottom face: the long overhangs make it tippy under fingertip
    # presses, the shape planar scripts exploit to rock it on the table
    "banana": ObjectSpec("banana", np.array([
        [-0.050, 0.004], [-0.020, -0.009], [0.020, -0.009],
        [0.050, 0.004], [0.030, 0.009], [-0.030, 0.009],
    ])),
}


@dataclass(frozen=True)
class SceneSpec:
    """Immutable world description shared by every simulation lane."""

    gripper: GripperSpec
    object: ObjectSpec
    params: SimParams
    bounds: ParamBounds = field(default_factory=ParamBounds)
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81]))
    table_y: float = 0.0
    tick_dt: float = 1.0 / 30.0
    substeps: int = 8
    solver_iterations: int = 20
    contact_margin: float = 0.002
    restitution_threshold: float = 0.05   # m/s, below this no bounce
    contact_force_threshold: float = 0.05  # N, sensor reports contact above this
    slip_velocity_threshold: float = 0.002  # m/s tangential
    rot_slip_velocity_threshold: float = 0.02  # rad/s

    def __post_init__(self):
        object.__setattr__(self, "gravity",
                           np.asarray(self.gravity, dtype=np.float64).reshape(2).copy())
        if self.substeps < 1 or self.solver_iterations < 1:
            raise ValueError("substeps and solver iterations must be positive")

    @property
    def substep_dt(self) -> float:
        return self.tick_dt / self.substeps

    def with_params(self, params: SimParams) -> "SceneSpec":
        return replace(self, params=params)

    def to_dict(self) -> dict:
        return {
            "schema": "scene-v1",
            "gripper": self.gripper.to_dict(),
            "object": self.object.to_dict(),
            "params": self.params.to_dict(),
            "bounds": {"lower": self.bounds.lower.tolist(),
                       "upper": self.bounds.upper.tolist()},
            "gravity": self.gravity.tolist(),
            "table_y": self.table_y,
            "tick_dt": self.tick_dt,
            "substeps": self.substeps,
            "solver_iterations": self.solver_iterations,
            "contact_margin": self.contact_margin,
            "restitution_threshold": self.restitution_threshold,
            "contact_force_threshold": self.contact_force_threshold,
            "slip_velocity_threshold": self.slip_velocity_threshold,
            "rot_slip_velocity_threshold": self.rot_slip_velocity_threshold,
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        if d.get("schema") != "scene-v1":
            raise ValueError(f"unsupported scene schema: {d.get('schema')!r}")
        return SceneSpec(
            gripper=GripperSpec.from_dict(d["gripper"]),
            object=ObjectSpec.from_dict(d["object"]),
            params=SimParams.from_dict(d["params"]),
            bounds=ParamBounds(lower=np.asarray(d["bounds"]["lower"]),
                               upper=np.asarray(d["bounds"]["upper"])),
            gravity=np.asarray(d["gravity"]),
            table_y=float(d["table_y"]),
            tick_dt=float(d["tick_dt"]),
            substeps=int(d["substeps"]),
            solver_iterations=int(d["solver_iterations"]),
            contact_margin=float(d["contact_margin"]),
            restitution_threshold=float(d["restitution_threshold"]),
            contact_force_threshold=float(d["contact_force_threshold"]),
            slip_velocity_threshold=float(d["slip_velocity_threshold"]),
            rot_slip_velocity_threshold=float(d["rot_slip_velocity_threshold"]),
        )

    def content_hash(self) -> str:
        """Stable hash over the canonical JSON encoding."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def default_scene(object_name: str = "spam", params: SimParams | None = None) -> SceneSpec:
    """Scene used throughout: two hanging fingers above a tabletop object."""
    obj = OBJECT_LIBRARY[object_name]
    if params is None:
        base = SimParams()
        params = base.replace(inertia=obj.inertia_for_mass(base.mass))
    return SceneSpec(gripper=GripperSpec(), object=obj, params=params)


def save_scene(scene: SceneSpec, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2, sort_keys=True))


def load_scene(path) -> SceneSpec:
    return SceneSpec.from_dict(json.loads(Path(path).read_text()))
