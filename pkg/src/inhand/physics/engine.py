"""Simulator facade over the compiled kernel.

Owns the per-lane mutable buffers (state, warm-start impulses, per-tick
accumulators), assembles observations, and exposes snapshot/restore so an
ensemble can copy whole lanes cheaply.
"""
from __future__ import annotations

import numpy as np

from ..geometry import Pose2, wrap_angle
from . import kernel
from .kinematics import forward_kinematics
from .scene import SceneSpec, SimParams
from .types import ControlCommand, Observation, PhysicsError, WorldState

__all__ = ["Simulator", "resting_pose"]


def resting_pose(scene: SceneSpec, x: float = 0.0, angle: float = 0.0,
                 clearance: float = 1.0e-4) -> Pose2:
    """Pose with the object's lowest vertex ``clearance`` above the table."""
    verts = scene.object.vertices
    c, s = np.cos(angle), np.sin(angle)
    ys = s * verts[:, 0] + c * verts[:, 1]
    y = scene.table_y - float(np.min(ys)) + clearance
    return Pose2(angle=angle, translation=np.array([x, y]))


class Simulator:
    """One forward simulation lane: articulated gripper plus free object."""

    def __init__(self, scene: SceneSpec, state: WorldState | None = None,
                 params: SimParams | None = None):
        self.scene = scene
        g = scene.gripper
        # static arrays the kernel reads every tick
        self._anchors = np.ascontiguousarray(g.anchors, dtype=np.float64)
        self._base_angles = np.ascontiguousarray(g.base_angles, dtype=np.float64)
        self._link_l = np.ascontiguousarray(g.link_lengths, dtype=np.float64)
        self._link_m = np.ascontiguousarray(g.link_masses, dtype=np.float64)
        self._gravity = np.ascontiguousarray(scene.gravity, dtype=np.float64)
        self._verts = np.ascontiguousarray(scene.object.vertices, dtype=np.float64)

        self.theta = (params or scene.params).as_array()

        if state is None:
            pose = resting_pose(scene)
            state = WorldState(g.home_joints.copy(), np.zeros(4), pose, np.zeros(3))
        self.q = state.joint_positions.astype(np.float64).copy()
        self.qd = state.joint_velocities.astype(np.float64).copy()
        self.pose = np.array([state.object_pose.translation[0],
                              state.object_pose.translation[1],
                              state.object_pose.angle], dtype=np.float64)
        self.vel = state.object_velocity.astype(np.float64).copy()

        ns = kernel.NUM_SLOTS
        self.warm_feat = np.full(ns, -1, dtype=np.int64)
        self.warm_lam = np.zeros((ns, 2))
        self.tick_lam = np.zeros((ns, 2))
        self.tick_imp = np.zeros((ns, 2))
        self.audit_gap = np.zeros((scene.substeps, ns))
        self.audit_lam = np.zeros((scene.substeps, ns, 2))
        self.last_active = np.zeros(ns, dtype=np.int64)
        self.last_point = np.zeros((ns, 2))
        self.last_normal = np.zeros((ns, 2))

        self._pending_force = np.zeros(2)
        self._pending_torque = 0.0
        self.dead = False
        self._last_obs: Observation | None = None
        self.tick_count = 0

    # -- parameters ---------------------------------------------------------

    def get_params(self) -> np.ndarray:
        return self.theta.copy()

    def set_params(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64).reshape(self.theta.shape)
        if not np.all(np.isfinite(theta)):
            raise ValueError("non-finite parameters")
        self.theta = self.scene.bounds.clamp(theta)

    # -- external pushes ----------------------------------------------------

    def queue_wrench(self, force, torque: float = 0.0) -> None:
        """Apply a force/torque on the object during the next tick only."""
        self._pending_force = np.asarray(force, dtype=np.float64).reshape(2).copy()
        self._pending_torque = float(torque)

    # -- stepping -----------------------------------------------------------

    def step(self, command: ControlCommand) -> Observation:
        if self.dead:
            raise PhysicsError("simulation diverged; restore a snapshot first")
        scene = self.scene
        u = np.clip(command.target_joint_positions,
                    -scene.gripper.joint_limit, scene.gripper.joint_limit)
        self.tick_lam[:] = 0.0
        self.tick_imp[:] = 0.0
        self.last_active[:] = 0
        err = kernel.run_tick(
            self.q, self.qd, self.pose, self.vel,
            u, self._pending_force, self._pending_torque,
            self.theta,
            self._anchors, self._base_angles, self._link_l, self._link_m,
            scene.gripper.link_radius, scene.gripper.tip_radius,
            scene.gripper.joint_limit, scene.gripper.max_torque,
            self._gravity, scene.table_y, self._verts,
            scene.contact_margin, scene.restitution_threshold,
            scene.substep_dt, scene.substeps, scene.solver_iterations,
            self.warm_feat, self.warm_lam,
            self.tick_lam, self.tick_imp,
            self.audit_gap, self.audit_lam,
            self.last_active, self.last_point, self.last_normal)
        self._pending_force = np.zeros(2)
        self._pending_torque = 0.0
        self.tick_count += 1
        if err != kernel.ERR_OK:
            self.dead = True
            raise PhysicsError(f"simulation diverged at tick {self.tick_count}")
        self._last_obs = self._assemble_observation()
        return self._last_obs

    def observe(self) -> Observation:
        """Most recent observation; contact-free kinematic one before any step."""
        if self._last_obs is None:
            self._last_obs = self._assemble_observation()
        return self._last_obs

    def _assemble_observation(self) -> Observation:
        scene = self.scene
        frames = forward_kinematics(scene.gripper, self.q)
        tips = frames.tips
        dt_tick = scene.tick_dt
        forces = np.zeros((2, 2))
        flags = np.zeros(2, dtype=bool)
        slip_dirs = np.zeros((2, 2))
        slipping = np.zeros(2, dtype=bool)
        rot_dirs = np.zeros(2)
        rot_slipping = np.zeros(2, dtype=bool)
        for f in range(2):
            # reaction from the object plus support from the table
            forces[f] = (-self.tick_imp[f] + self.tick_imp[8 + f]) / dt_tick
            mag = float(np.hypot(forces[f, 0], forces[f, 1]))
            flags[f] = mag > scene.contact_force_threshold
            if not flags[f]:
                continue
            dominant = -1
            best = -1.0
            for slot in (f, 8 + f):
                if self.last_active[slot] and self.tick_lam[slot, 0] > best:
                    best = self.tick_lam[slot, 0]
                    dominant = slot
            if dominant < 0:
                continue
            p = self.last_point[dominant]
            n = self.last_normal[dominant]
            j1 = np.array([-(p[1] - self._anchors[f, 1]), p[0] - self._anchors[f, 0]])
            j2 = np.array([-(p[1] - frames.elbows[f, 1]), p[0] - frames.elbows[f, 0]])
            v_tip = self.qd[2 * f] * j1 + self.qd[2 * f + 1] * j2
            if dominant < 8:
                r = p - self.pose[:2]
                v_other = np.array([self.vel[0] - self.vel[2] * r[1],
                                    self.vel[1] + self.vel[2] * r[0]])
                omega_other = self.vel[2]
            else:
                v_other = np.zeros(2)
                omega_other = 0.0
            v_rel = v_other - v_tip
            v_t = v_rel - (v_rel @ n) * n
            speed = float(np.hypot(v_t[0], v_t[1]))
            if speed > scene.slip_velocity_threshold:
                slipping[f] = True
                slip_dirs[f] = v_t / speed
            omega_rel = omega_other - (self.qd[2 * f] + self.qd[2 * f + 1])
            if abs(omega_rel) > scene.rot_slip_velocity_threshold:
                rot_slipping[f] = True
                rot_dirs[f] = 1.0 if omega_rel > 0.0 else 0.0
        return Observation(
            joint_positions=self.q.copy(),
            sensor_positions=tips.copy(),
            sensor_rotations=frames.tip_angles.copy(),
            contact_forces=forces,
            slip_directions=slip_dirs,
            rot_slip_directions=rot_dirs,
            contact_flags=flags,
            slipping_flags=slipping,
            rot_slipping_flags=rot_slipping,
        )

    # -- state access -------------------------------------------------------

    def object_pose(self) -> Pose2:
        return Pose2(angle=wrap_angle(float(self.pose[2])),
                     translation=self.pose[:2].copy())

    def export_state(self) -> WorldState:
        return WorldState(self.q, self.qd, self.object_pose(), self.vel)

    def import_state(self, state: WorldState) -> None:
        self.q = state.joint_positions.astype(np.float64).copy()
        self.qd = state.joint_velocities.astype(np.float64).copy()
        self.pose = np.array([state.object_pose.translation[0],
                              state.object_pose.translation[1],
                              state.object_pose.angle], dtype=np.float64)
        self.vel = state.object_velocity.astype(np.float64).copy()
        self.warm_feat[:] = -1
        self.warm_lam[:] = 0.0
        self.dead = False
        self._last_obs = None

    def snapshot(self) -> dict:
        """Everything needed to clone this lane bit-exactly."""
        return {
            "q": self.q.copy(), "qd": self.qd.copy(),
            "pose": self.pose.copy(), "vel": self.vel.copy(),
            "warm_feat": self.warm_feat.copy(), "warm_lam": self.warm_lam.copy(),
            "theta": self.theta.copy(), "dead": self.dead,
        }

    def restore(self, snap: dict) -> None:
        self.q = snap["q"].copy()
        self.qd = snap["qd"].copy()
        self.pose = snap["pose"].copy()
        self.vel = snap["vel"].copy()
        self.warm_feat = snap["warm_feat"].copy()
        self.warm_lam = snap["warm_lam"].copy()
        self.theta = snap["theta"].copy()
        self.dead = bool(snap["dead"])
        self._last_obs = None

    # -- diagnostics --------------------------------------------------------

    def signed_gaps(self) -> np.ndarray:
        g = self.scene.gripper
        out = np.empty(kernel.NUM_SLOTS)
        kernel.signed_gaps(self.q, self.pose, self._anchors, self._base_angles,
                           self._link_l, g.link_radius, g.tip_radius,
                           self._verts, self.scene.table_y,
                           self.scene.contact_margin, out)
        return out

    def kinetic_energy(self) -> float:
        m, inertia = self.theta[0], self.theta[1]
        ke = 0.5 * m * float(self.vel[0] ** 2 + self.vel[1] ** 2)
        ke += 0.5 * inertia * float(self.vel[2] ** 2)
        g = self.scene.gripper
        for f in range(2):
            m11, m12, m22, _c1, _c2, _g1, _g2 = kernel._arm_dynamics(
                self.q[2 * f], self.q[2 * f + 1],
                self.qd[2 * f], self.qd[2 * f + 1],
                g.link_masses[0], g.link_masses[1],
                g.link_lengths[0], g.link_lengths[1],
                self._gravity[0], self._gravity[1], self._base_angles[f])
            qd1, qd2 = self.qd[2 * f], self.qd[2 * f + 1]
            ke += 0.5 * (m11 * qd1 * qd1 + 2.0 * m12 * qd1 * qd2 + m22 * qd2 * qd2)
        return ke

    def settle(self, ticks: int = 30) -> None:
        """Run with the current joints as the hold target to damp transients."""
        hold = ControlCommand(self.q.copy())
        for _ in range(ticks):
            self.step(hold)
