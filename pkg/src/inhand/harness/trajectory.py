"""Scripted demonstrations recorded as replayable trajectories.

A trajectory is a JSONL file: one header line (schema ``trajectory-v1``)
carrying the scene hash, the hidden simulation parameters, and the exact
initial world state, followed by one line per tick with the control target,
the noise-corrupted observation, and the exact ground-truth object pose.
Floats serialize via ``repr`` so parsing is bit-exact.

Recording re-imports the captured initial state before streaming, which
clears solver warm-start memory; a replay from the header state therefore
reproduces the ground-truth poses bit-for-bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..geometry import PointCloud, Pose2, wrap_angle
from ..physics import (ControlCommand, Observation, SceneSpec, SimParams,
                       Simulator, WorldState)
from ..physics.engine import resting_pose
from ..physics.kinematics import forward_kinematics, gripper_ik

__all__ = [
    "ObservationNoise", "GroundTruthConfig", "default_ground_truth",
    "TrajectoryTick", "TrajectoryRecord", "TrajectoryRejected",
    "script_trajectory", "save_trajectory", "load_trajectory",
    "dumps_trajectory", "loads_trajectory", "object_cloud",
    "TRAJECTORY_KINDS",
]

TRAJECTORY_KINDS = ("grasp-rotate", "gait")

# ground truth leaves the workspace => the script failed (object dropped/shot)
_WORKSPACE_X = 0.4
_WORKSPACE_Y = (-0.005, 0.5)


class TrajectoryRejected(RuntimeError):
    """Scripted rollout failed; retry with another seed."""


@dataclass(frozen=True)
class ObservationNoise:
    """Synthetic sensor noise applied to recorded observations only."""

    sigma_joint: float = 0.002        # rad
    sigma_sensor_pos: float = 0.0005  # m
    sigma_sensor_rot: float = 0.002   # rad
    sigma_force: float = 0.05         # N per component
    flag_flip_prob: float = 0.02

    def __post_init__(self):
        for name in ("sigma_joint", "sigma_sensor_pos", "sigma_sensor_rot",
                     "sigma_force", "flag_flip_prob"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @staticmethod
    def zero() -> "ObservationNoise":
        return ObservationNoise(0.0, 0.0, 0.0, 0.0, 0.0)

    @property
    def is_zero(self) -> bool:
        return (self.sigma_joint == 0 and self.sigma_sensor_pos == 0
                and self.sigma_sensor_rot == 0 and self.sigma_force == 0
                and self.flag_flip_prob == 0)

    def apply(self, obs: Observation, rng: np.random.Generator) -> Observation:
        if self.is_zero:
            return obs.copy()
        out = obs.copy()
        out.joint_positions += rng.normal(
            0.0, self.sigma_joint, out.joint_positions.shape)
        out.sensor_positions += rng.normal(
            0.0, self.sigma_sensor_pos, out.sensor_positions.shape)
        out.sensor_rotations += rng.normal(
            0.0, self.sigma_sensor_rot, out.sensor_rotations.shape)
        out.contact_forces += rng.normal(
            0.0, self.sigma_force, out.contact_forces.shape)
        for flags in (out.contact_flags, out.slipping_flags,
                      out.rot_slipping_flags):
            flip = rng.random(flags.shape) < self.flag_flip_prob
            flags ^= flip
        return out

    def to_dict(self) -> dict:
        return {"sigma_joint": self.sigma_joint,
                "sigma_sensor_pos": self.sigma_sensor_pos,
                "sigma_sensor_rot": self.sigma_sensor_rot,
                "sigma_force": self.sigma_force,
                "flag_flip_prob": self.flag_flip_prob}

    @staticmethod
    def from_dict(d: dict) -> "ObservationNoise":
        return ObservationNoise(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class GroundTruthConfig:
    """Hidden world: true parameters, sensor noise, initial object placement."""

    params: SimParams
    noise: ObservationNoise = field(default_factory=ObservationNoise)
    initial_pose: Pose2 | None = None   # None: resting on the table at x=0

    def in_support(self, scene: SceneSpec) -> bool:
        """True when the hidden parameters lie inside the estimator's bounds."""
        return scene.bounds.contains(self.params.as_array())


def default_ground_truth(scene: SceneSpec, mass_scale: float = 1.2,
                         friction_scale: float = 1.3,
                         noise: ObservationNoise | None = None) -> GroundTruthConfig:
    """Hidden parameters offset from the prior so adaptation has a target."""
    prior = scene.params
    mass = prior.mass * mass_scale
    gt = prior.replace(mass=mass,
                       inertia=scene.object.inertia_for_mass(mass),
                       friction=prior.friction * friction_scale)
    return GroundTruthConfig(params=gt, noise=noise or ObservationNoise())


@dataclass
class TrajectoryTick:
    index: int
    control: np.ndarray        # (D,) joint targets
    observation: Observation   # noise-corrupted
    gt_pose: Pose2             # exact


@dataclass
class TrajectoryRecord:
    schema: str
    scene_hash: str
    kind: str
    tick_dt: float
    num_joints: int
    num_sensors: int
    gt_params: SimParams
    initial_state: WorldState
    ticks: list[TrajectoryTick]

    def __post_init__(self):
        for i, tk in enumerate(self.ticks):
            if tk.index != i:
                raise ValueError("tick indices must be contiguous from 0")

    def __len__(self) -> int:
        return len(self.ticks)

    def validate_scene(self, scene: SceneSpec) -> None:
        if scene.content_hash() != self.scene_hash:
            raise ValueError("trajectory was recorded against a different scene")

    def net_rotation(self) -> float:
        first = self.initial_state.object_pose.angle
        last = self.ticks[-1].gt_pose.angle
        return abs(wrap_angle(last - first))


def object_cloud(scene: SceneSpec) -> PointCloud:
    """Body-frame evaluation points for the ADD metric: the polygon vertices."""
    return PointCloud(scene.object.vertices.copy())


# -- serialization -----------------------------------------------------------

def _pose_to_dict(p: Pose2) -> dict:
    return {"a": float(p.angle), "t": [float(p.translation[0]),
                                       float(p.translation[1])]}


def _pose_from_dict(d: dict) -> Pose2:
    return Pose2(angle=d["a"], translation=np.asarray(d["t"], dtype=np.float64))


def _state_to_dict(s: WorldState) -> dict:
    return {"q": s.joint_positions.tolist(), "qd": s.joint_velocities.tolist(),
            "pose": _pose_to_dict(s.object_pose), "vel": s.object_velocity.tolist()}


def _state_from_dict(d: dict) -> WorldState:
    return WorldState(np.asarray(d["q"]), np.asarray(d["qd"]),
                      _pose_from_dict(d["pose"]), np.asarray(d["vel"]))


def dumps_trajectory(record: TrajectoryRecord) -> str:
    header = {
        "schema": record.schema,
        "scene_hash": record.scene_hash,
        "kind": record.kind,
        "tick_dt": record.tick_dt,
        "num_joints": record.num_joints,
        "num_sensors": record.num_sensors,
        "gt_params": record.gt_params.to_dict(),
        "initial_state": _state_to_dict(record.initial_state),
        "num_ticks": len(record.ticks),
    }
    lines = [json.dumps(header)]
    for tk in record.ticks:
        lines.append(json.dumps({
            "i": tk.index,
            "u": tk.control.tolist(),
            "obs": tk.observation.to_dict(),
            "pose": _pose_to_dict(tk.gt_pose),
        }))
    return "\n".join(lines) + "\n"


def loads_trajectory(text: str) -> TrajectoryRecord:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty trajectory document")
    header = json.loads(lines[0])
    if header.get("schema") != "trajectory-v1":
        raise ValueError(f"unsupported trajectory schema: "
                         f"{header.get('schema')!r}")
    ticks = []
    for line in lines[1:]:
        if not line.strip():
            continue
        d = json.loads(line)
        ticks.append(TrajectoryTick(
            index=int(d["i"]),
            control=np.asarray(d["u"], dtype=np.float64),
            observation=Observation.from_dict(d["obs"]),
            gt_pose=_pose_from_dict(d["pose"]),
        ))
    if len(ticks) != int(header["num_ticks"]):
        raise ValueError("trajectory truncated: tick count mismatch")
    return TrajectoryRecord(
        schema=header["schema"],
        scene_hash=header["scene_hash"],
        kind=header["kind"],
        tick_dt=float(header["tick_dt"]),
        num_joints=int(header["num_joints"]),
        num_sensors=int(header["num_sensors"]),
        gt_params=SimParams.from_dict(header["gt_params"]),
        initial_state=_state_from_dict(header["initial_state"]),
        ticks=ticks,
    )


def save_trajectory(record: TrajectoryRecord, path) -> None:
    Path(path).write_text(dumps_trajectory(record))


def load_trajectory(path) -> TrajectoryRecord:
    return loads_trajectory(Path(path).read_text())


# -- scripted controllers ----------------------------------------------------

@dataclass
class _Segment:
    tips: np.ndarray   # (2, 2) fingertip targets at segment end
    ticks: int


def _object_extent(scene: SceneSpec):
    v = scene.object.vertices
    hw = float(np.max(v[:, 0]))
    rest_y = -float(np.min(v[:, 1]))   # centroid height when resting flat
    top_y = float(np.max(v[:, 1])) + rest_y
    return hw, rest_y, top_y


def _jit(rng, scale):
    return float(rng.uniform(-scale, scale))


def _touch_height(scene: SceneSpec, px: float) -> float:
    """Tip-center height that just grazes the resting object above x=px.

    Exact for a convex outline: the governing feature is either a vertex
    (circle contact) or an upward-facing edge offset by the tip radius.
    """
    g = scene.gripper
    v = scene.object.vertices
    rest = v + np.array([0.0, -float(np.min(v[:, 1]))])
    area = 0.0
    for i in range(len(rest)):
        a, b = rest[i], rest[(i + 1) % len(rest)]
        area += a[0] * b[1] - b[0] * a[1]
    sign = 1.0 if area > 0 else -1.0
    best = -np.inf
    for i in range(len(rest)):
        a, b = rest[i], rest[(i + 1) % len(rest)]
        d = np.abs(px - a[0])
        if d <= g.tip_radius:
            best = max(best, a[1] + np.sqrt(g.tip_radius ** 2 - d * d))
        e = b - a
        n = sign * np.array([e[1], -e[0]]) / max(np.linalg.norm(e), 1e-12)
        if n[1] <= 1e-9:
            continue
        y = (n @ a + g.tip_radius - n[0] * px) / n[1]
        t = (np.array([px, y]) - g.tip_radius * n - a) @ e
        if 0.0 <= t <= e @ e:
            best = max(best, y)
    return float(best)


def _rot(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s], [s, c]])


def _script_rect_grasp_rotate(scene, rng) -> list[_Segment]:
    g = scene.gripper
    hw, cy, top = _object_extent(scene)
    press = 0.014 + _jit(rng, 0.001)
    gy = cy + _jit(rng, 0.002)
    grasp = np.array([[-hw - g.tip_radius + press, gy],
                      [hw + g.tip_radius - press, gy]])
    pre = grasp + np.array([[-0.02, 0.01], [0.02, 0.01]])
    lift_h = 0.035 + _jit(rng, 0.003)
    lifted = grasp + np.array([0.0, lift_h])
    center = np.array([0.0, gy + lift_h])
    segs = [_Segment(pre, 18), _Segment(grasp, 32), _Segment(grasp, 20),
            _Segment(lifted, 50), _Segment(lifted, 20)]
    # counter-rotate the pressed targets about the carried object's center
    plan = [0.35 + _jit(rng, 0.04), -0.15 + _jit(rng, 0.03),
            0.30 + _jit(rng, 0.04)]
    angle = 0.0
    rel = lifted - center
    for da in plan:
        steps = 8
        for k in range(steps):
            angle += da / steps
            segs.append(_Segment(center + rel @ _rot(angle).T, 9))
    return segs


def _script_rect_gait(scene, rng) -> list[_Segment]:
    g = scene.gripper
    hw, cy, top = _object_extent(scene)
    press = 0.014 + _jit(rng, 0.001)
    light = 0.002
    gy = cy + _jit(rng, 0.002)

    def side(depth, dy=0.0):
        return np.array([[-hw - g.tip_radius + depth, gy + dy],
                         [hw + g.tip_radius - depth, gy + dy]])

    grasp = side(press)
    lift_h = 0.030 + _jit(rng, 0.003)
    lifted = grasp + np.array([0.0, lift_h])
    center = np.array([0.0, gy + lift_h])
    segs = [_Segment(side(-0.006, 0.01), 18), _Segment(grasp, 30),
            _Segment(grasp, 15), _Segment(lifted, 45)]
    # rotate a little in the air, rotate back level, set the object down
    a = 0.20 + _jit(rng, 0.02)
    segs.append(_Segment((lifted - center) @ _rot(a).T + center, 35))
    segs.append(_Segment(lifted, 35))
    segs.append(_Segment(grasp + np.array([0.0, 0.002]), 40))
    # relax to a light touch so a single finger cannot shove the object
    segs.append(_Segment(side(light), 25))
    # pin the object down from above with finger 1 while finger 0 walks
    pin1 = np.array([0.010, top + g.tip_radius - 0.010 + _jit(rng, 0.001)])
    via1 = np.array([hw + 0.045, top + 0.05])
    f0_light = side(light)[0]
    segs.append(_Segment(np.array([f0_light, via1]), 18))
    segs.append(_Segment(np.array([f0_light, pin1]), 18))
    out0 = np.array([-hw - g.tip_radius - 0.030, gy + 0.035])
    re0 = np.array([-hw - g.tip_radius + light, cy - 0.004])
    segs.append(_Segment(np.array([out0, pin1]), 18))
    segs.append(_Segment(np.array([re0, pin1]), 22))
    # finger 1 back down to the side face, then deepen the fresh grip
    re1 = np.array([hw + g.tip_radius - light, cy - 0.004])
    segs.append(_Segment(np.array([re0, via1]), 15))
    segs.append(_Segment(np.array([re0, re1]), 22))
    regrasp = np.array([[re0[0] + press - light, re0[1]],
                        [re1[0] - press + light, re1[1]]])
    segs.append(_Segment(regrasp, 18))
    relift = regrasp + np.array([0.0, lift_h])
    segs.append(_Segment(relift, 40))
    b = 0.32 + _jit(rng, 0.03)
    center2 = np.array([0.0, cy - 0.004 + lift_h])
    segs.append(_Segment((relift - center2) @ _rot(b).T + center2, 40))
    return segs


def _script_seesaw(scene, rng, alternate: bool) -> list[_Segment]:
    """Thin-object rocking and shoving: presses pivot it, end pushes slide it.

    Pressing must happen near the object's end: the gravity lever about the
    support corner is several times the press lever, so mid-slant pushes
    saturate the joint torques before the object tips. The low end pushes
    slide the object against table friction, so where it actually ends up
    depends on the hidden mass and friction; each cycle pushes back roughly
    to center so later presses still land near an end.
    """
    g = scene.gripper
    hw, cy, top = _object_extent(scene)
    px = hw - 0.0045 + _jit(rng, 0.001)
    yc = _touch_height(scene, px)
    floor_y = g.tip_radius + 0.0018  # keep the tip clear of the table
    hover = np.array([0.0, 0.045])
    touch_l = np.array([-px, yc + 0.0015])
    touch_r = np.array([px, yc + 0.0015])
    down_l = np.array([-px, floor_y + _jit(rng, 0.0006)])
    down_r = np.array([px, floor_y + _jit(rng, 0.0006)])
    push_d = 0.020 + _jit(rng, 0.001)
    # raking the sweep target upward cancels the arm's skewed cartesian
    # stiffness, else the tip leans down on the object and wedges it against
    # table friction instead of sliding it
    rise = 0.008
    start_l = np.array([-hw - g.tip_radius - 0.001, floor_y])
    end_l = np.array([-hw - g.tip_radius + push_d, floor_y + rise])
    start_r = np.array([hw + g.tip_radius + 0.001, floor_y])
    end_r = np.array([hw + g.tip_radius - push_d, floor_y + rise])
    park_l = touch_l + hover
    park_r = touch_r + hover

    def left(seg_tip, ticks):
        return _Segment(np.array([seg_tip, park_r]), ticks)

    def right(seg_tip, ticks):
        return _Segment(np.array([park_l, seg_tip]), ticks)

    # transitions run on straight lines that clear the object outline, so
    # contact gaps stay short: a pose-blind stretch makes the published
    # estimate hop between hypotheses the costs cannot yet separate
    segs = [_Segment(np.array([park_l, park_r]), 8)]
    if alternate:
        # handover flavor: the replacement finger presses before the
        # incumbent lets go, so the object is never fully free mid-cycle
        segs += [left(touch_l, 10), left(down_l, 40), left(down_l, 12)]
        segs.append(_Segment(np.array([down_l, touch_r]), 14))
        segs += [right(down_r, 40), right(down_r, 12)]
    else:
        segs += [left(touch_l, 10), left(down_l, 40), left(down_l, 14),
                 left(touch_l, 10)]
    # shove right: cut outside the left end, sweep in at floor level
    segs += [left(start_l, 12), left(end_l, 38), left(start_l, 8)]
    # rock on the right end (the object sits a bit right of center now)
    segs += [right(touch_r, 14), right(down_r, 40), right(down_r, 14),
             right(touch_r, 10)]
    # shove back left
    segs += [right(start_r, 12), right(end_r, 38), right(start_r, 8)]
    # final cycle; the last press is held through the padded tail so the
    # trajectory keeps a live contact to the very end
    if alternate:
        segs += [left(touch_l, 14), left(down_l, 40), left(down_l, 12)]
        segs.append(_Segment(np.array([down_l, touch_r]), 14))
        segs += [right(down_r, 40), right(down_r, 20)]
    else:
        segs += [left(touch_l, 14), left(down_l, 40), left(down_l, 14),
                 left(touch_l, 10)]
        segs += [left(start_l, 12), left(end_l, 38), left(start_l, 8)]
        segs += [right(touch_r, 14), right(down_r, 40), right(down_r, 20)]
    return segs


def _build_controls(scene: SceneSpec, segs: list[_Segment],
                    total_ticks: int) -> np.ndarray:
    """Interpolate fingertip waypoints and convert to joint targets."""
    start = forward_kinematics(scene.gripper, scene.gripper.home_joints).tips
    tip_path = []
    prev = start
    for seg in segs:
        n = max(int(seg.ticks), 0)
        for k in range(n):
            a = (k + 1) / n
            tip_path.append((1 - a) * prev + a * seg.tips)
        prev = seg.tips
    while len(tip_path) < total_ticks:
        tip_path.append(prev.copy())
    tip_path = tip_path[:total_ticks]
    controls = np.empty((total_ticks, 4))
    for t, tips in enumerate(tip_path):
        controls[t] = gripper_ik(scene.gripper, tips)
    return controls


_THIN_ASPECT = 2.5


def _is_thin(scene: SceneSpec) -> bool:
    v = scene.object.vertices
    w = float(np.max(v[:, 0]) - np.min(v[:, 0]))
    h = float(np.max(v[:, 1]) - np.min(v[:, 1]))
    return w / max(h, 1e-9) >= _THIN_ASPECT


def script_trajectory(kind: str, scene: SceneSpec, gt: GroundTruthConfig,
                      rng: np.random.Generator,
                      ticks: int = 600) -> TrajectoryRecord:
    """Roll the hidden-parameter world under a scripted waypoint controller."""
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}; "
                         f"expected one of {TRAJECTORY_KINDS}")
    if _is_thin(scene):
        segs = _script_seesaw(scene, rng, alternate=(kind == "gait"))
    elif kind == "grasp-rotate":
        segs = _script_rect_grasp_rotate(scene, rng)
    else:
        segs = _script_rect_gait(scene, rng)
    controls = _build_controls(scene, segs, ticks)

    init_pose = gt.initial_pose or resting_pose(scene)
    state = WorldState(scene.gripper.home_joints.copy(), np.zeros(4),
                       init_pose, np.zeros(3))
    sim = Simulator(scene, state=state, params=gt.params)
    hold = ControlCommand(scene.gripper.home_joints.copy())
    for _ in range(30):
        sim.step(hold)
    initial_state = sim.export_state()
    # cold restart from the captured state: replays of the header state
    # then reproduce this exact rollout
    sim.import_state(initial_state)

    recorded: list[TrajectoryTick] = []
    for t in range(ticks):
        cmd = ControlCommand(controls[t])
        try:
            obs = sim.step(cmd)
        except Exception as exc:
            raise TrajectoryRejected(f"physics failed at tick {t}: {exc}") from exc
        pose = sim.object_pose()
        x, y = float(pose.translation[0]), float(pose.translation[1])
        if abs(x) > _WORKSPACE_X or not (_WORKSPACE_Y[0] <= y <= _WORKSPACE_Y[1]):
            raise TrajectoryRejected(
                f"object left the workspace at tick {t}: x={x:.3f} y={y:.3f}")
        recorded.append(TrajectoryTick(
            index=t,
            control=controls[t].copy(),
            observation=gt.noise.apply(obs, rng),
            gt_pose=pose,
        ))
    return TrajectoryRecord(
        schema="trajectory-v1",
        scene_hash=scene.content_hash(),
        kind=kind,
        tick_dt=scene.tick_dt,
        num_joints=4,
        num_sensors=2,
        gt_params=gt.params,
        initial_state=initial_state,
        ticks=recorded,
    )
