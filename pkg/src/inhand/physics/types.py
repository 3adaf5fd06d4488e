"""State, control, and observation records exchanged with the simulator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Pose2

__all__ = ["WorldState", "ControlCommand", "Observation", "PhysicsError"]


class PhysicsError(RuntimeError):
    """Raised when a simulation state becomes invalid (non-finite)."""


@dataclass
class WorldState:
    """Full dynamic state of one simulation."""

    joint_positions: np.ndarray   # (D,) rad
    joint_velocities: np.ndarray  # (D,) rad/s
    object_pose: Pose2
    object_velocity: np.ndarray   # (3,) [vx, vy, omega]

    def __post_init__(self):
        self.joint_positions = np.asarray(self.joint_positions, dtype=np.float64).copy()
        self.joint_velocities = np.asarray(self.joint_velocities, dtype=np.float64).copy()
        self.object_velocity = np.asarray(self.object_velocity, dtype=np.float64).reshape(3).copy()
        if self.joint_positions.shape != self.joint_velocities.shape:
            raise ValueError("joint position/velocity dimension mismatch")
        if not (np.all(np.isfinite(self.joint_positions))
                and np.all(np.isfinite(self.joint_velocities))
                and np.all(np.isfinite(self.object_velocity))):
            raise ValueError("non-finite world state")

    def copy(self) -> "WorldState":
        return WorldState(self.joint_positions, self.joint_velocities,
                          self.object_pose, self.object_velocity)


@dataclass(frozen=True)
class ControlCommand:
    """Desired joint positions; out-of-limit targets are clamped by the engine."""

    target_joint_positions: np.ndarray  # (D,) rad

    def __post_init__(self):
        t = np.asarray(self.target_joint_positions, dtype=np.float64).copy()
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite control command")
        object.__setattr__(self, "target_joint_positions", t)


@dataclass
class Observation:
    """Per-tick sensing: joint angles plus per-fingertip contact feedback.

    ``contact_flags[l]`` is set iff the force magnitude on sensor ``l``
    exceeds the scene's contact threshold. ``slip_directions[l]`` is the unit
    direction of the contacted surface's tangential motion relative to the
    sensor (zero when not slipping). ``rot_slip_directions[l]`` encodes the
    sign of relative angular velocity at the contact as a {0, 1} bit.
    """

    joint_positions: np.ndarray      # (D,)
    sensor_positions: np.ndarray     # (L, 2) m
    sensor_rotations: np.ndarray     # (L,) rad
    contact_forces: np.ndarray       # (L, 2) N
    slip_directions: np.ndarray      # (L, 2) unit or zero
    rot_slip_directions: np.ndarray  # (L,) in {0, 1}
    contact_flags: np.ndarray        # (L,) bool
    slipping_flags: np.ndarray       # (L,) bool
    rot_slipping_flags: np.ndarray   # (L,) bool

    @property
    def num_sensors(self) -> int:
        return int(self.sensor_positions.shape[0])

    @property
    def num_joints(self) -> int:
        return int(self.joint_positions.shape[0])

    def copy(self) -> "Observation":
        return Observation(*(np.array(getattr(self, f), copy=True) for f in _OBS_FIELDS))

    def to_dict(self) -> dict:
        """Compact JSON-friendly encoding (schema: observation-v1)."""
        return {
            "q": self.joint_positions.tolist(),
            "sp": self.sensor_positions.tolist(),
            "sr": self.sensor_rotations.tolist(),
            "f": self.contact_forces.tolist(),
            "sd": self.slip_directions.tolist(),
            "rsd": self.rot_slip_directions.tolist(),
            "c": [bool(v) for v in self.contact_flags],
            "s": [bool(v) for v in self.slipping_flags],
            "rs": [bool(v) for v in self.rot_slipping_flags],
        }

    @staticmethod
    def from_dict(d: dict) -> "Observation":
        return Observation(
            joint_positions=np.asarray(d["q"], dtype=np.float64),
            sensor_positions=np.asarray(d["sp"], dtype=np.float64),
            sensor_rotations=np.asarray(d["sr"], dtype=np.float64),
            contact_forces=np.asarray(d["f"], dtype=np.float64),
            slip_directions=np.asarray(d["sd"], dtype=np.float64),
            rot_slip_directions=np.asarray(d["rsd"], dtype=np.float64),
            contact_flags=np.asarray(d["c"], dtype=bool),
            slipping_flags=np.asarray(d["s"], dtype=bool),
            rot_slipping_flags=np.asarray(d["rs"], dtype=bool),
        )


_OBS_FIELDS = (
    "joint_positions", "sensor_positions", "sensor_rotations", "contact_forces",
    "slip_directions", "rot_slip_directions", "contact_flags", "slipping_flags",
    "rot_slipping_flags",
)
