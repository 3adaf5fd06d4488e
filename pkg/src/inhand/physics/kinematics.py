"""Forward and inverse kinematics for the two-link planar fingers.

Joint layout: ``q = [f0_proximal, f0_distal, f1_proximal, f1_distal]``.
Link ``k`` of finger ``f`` has world angle

    phi[f, 0] = base_angle[f] + q[2 f]
    phi[f, 1] = phi[f, 0] + q[2 f + 1]

so the distal sensor rotation reported in observations is ``phi[f, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import wrap_angle
from .scene import GripperSpec

__all__ = ["FingerFrames", "forward_kinematics", "finger_ik", "gripper_ik"]


@dataclass(frozen=True)
class FingerFrames:
    """World-frame frames of both fingers for one joint configuration."""

    anchors: np.ndarray      # (2, 2)
    elbows: np.ndarray       # (2, 2)
    tips: np.ndarray         # (2, 2)
    link_angles: np.ndarray  # (2, 2) world angle of link k of finger f

    @property
    def tip_angles(self) -> np.ndarray:
        return self.link_angles[:, 1]


def forward_kinematics(gripper: GripperSpec, q: np.ndarray) -> FingerFrames:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    elbows = np.empty((2, 2))
    tips = np.empty((2, 2))
    angles = np.empty((2, 2))
    for f in range(2):
        phi1 = gripper.base_angles[f] + q[2 * f]
        phi2 = phi1 + q[2 * f + 1]
        angles[f, 0] = phi1
        angles[f, 1] = phi2
        elbows[f] = gripper.anchors[f] + gripper.link_lengths[0] * np.array(
            [np.cos(phi1), np.sin(phi1)])
        tips[f] = elbows[f] + gripper.link_lengths[1] * np.array(
            [np.cos(phi2), np.sin(phi2)])
    return FingerFrames(anchors=gripper.anchors.copy(), elbows=elbows,
                        tips=tips, link_angles=angles)


def finger_ik(gripper: GripperSpec, finger: int, target: np.ndarray,
              elbow_sign: float = 1.0) -> tuple[float, float]:
    """Closed-form two-link inverse kinematics for one fingertip.

    Targets outside the annular reach are projected onto its boundary, so the
    returned joints always exist; callers that care should check the residual
    with :func:`forward_kinematics`.
    """
    l1, l2 = float(gripper.link_lengths[0]), float(gripper.link_lengths[1])
    d = np.asarray(target, dtype=np.float64).reshape(2) - gripper.anchors[finger]
    r = float(np.hypot(d[0], d[1]))
    # project into reach, shying off the exact singularities
    r = min(max(r, abs(l1 - l2) + 1e-9), l1 + l2 - 1e-9)
    cos_q2 = (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    q2 = float(np.sign(elbow_sign) if elbow_sign != 0 else 1.0) * float(
        np.arccos(np.clip(cos_q2, -1.0, 1.0)))
    psi = float(np.arctan2(d[1], d[0]))
    q1_world = psi - float(np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2)))
    q1 = wrap_angle(q1_world - float(gripper.base_angles[finger]))
    lim = gripper.joint_limit
    return float(np.clip(q1, -lim, lim)), float(np.clip(q2, -lim, lim))


def gripper_ik(gripper: GripperSpec, targets: np.ndarray,
               elbow_signs=(1.0, -1.0)) -> np.ndarray:
    """IK for both fingertips at once; ``targets`` is (2, 2)."""
    targets = np.asarray(targets, dtype=np.float64).reshape(2, 2)
    q = np.empty(4)
    for f in range(2):
        q[2 * f], q[2 * f + 1] = finger_ik(gripper, f, targets[f], elbow_signs[f])
    return q
