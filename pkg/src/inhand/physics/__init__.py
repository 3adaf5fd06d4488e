"""Planar rigid-body contact simulator with an articulated, position-controlled
two-finger gripper, one free convex-polygon object, a table half-plane, and
fingertip contact sensing."""

from .types import ControlCommand, Observation, PhysicsError, WorldState
from .scene import (
    GripperSpec,
    ObjectSpec,
    ParamBounds,
    SceneSpec,
    SimParams,
    default_scene,
    load_scene,
    save_scene,
    OBJECT_LIBRARY,
)
from .engine import Simulator
from .kinematics import forward_kinematics

__all__ = [
    "ControlCommand",
    "Observation",
    "PhysicsError",
    "WorldState",
    "GripperSpec",
    "ObjectSpec",
    "ParamBounds",
    "SceneSpec",
    "SimParams",
    "default_scene",
    "load_scene",
    "save_scene",
    "OBJECT_LIBRARY",
    "Simulator",
    "forward_kinematics",
]
