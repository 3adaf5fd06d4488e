"""Shared fixtures: scenes, a warmed-up physics kernel, small cached records."""
import numpy as np
import pytest

from inhand.harness import ObservationNoise, default_ground_truth, script_trajectory
from inhand.physics import ControlCommand, Simulator, default_scene


@pytest.fixture(scope="session")
def spam_scene():
    return default_scene("spam")


@pytest.fixture(scope="session")
def foam_scene():
    return default_scene("foam")


@pytest.fixture(scope="session")
def banana_scene():
    return default_scene("banana")


@pytest.fixture(scope="session", autouse=True)
def warm_kernel(spam_scene):
    # the first step compiles the jit kernel; keep that out of timed tests
    sim = Simulator(spam_scene)
    for _ in range(3):
        sim.step(ControlCommand(spam_scene.gripper.home_joints.copy()))


@pytest.fixture(scope="session")
def pinch_commands(spam_scene):
    """Joint targets that close both tips onto the resting object's sides."""
    from inhand.physics.engine import resting_pose
    from inhand.physics.kinematics import forward_kinematics, gripper_ik

    g = spam_scene.gripper
    verts = resting_pose(spam_scene).apply(spam_scene.object.vertices)
    hw = float(np.max(np.abs(verts[:, 0])))
    yc = float(verts[:, 1].mean())
    home = forward_kinematics(g, g.home_joints).tips
    press = np.array([[-hw + 0.002, yc], [hw - 0.002, yc]])
    cmds = []
    for t in range(30):
        a = min(1.0, t / 12.0)
        cmds.append(ControlCommand(
            gripper_ik(g, home * (1.0 - a) + press * a)))
    return cmds


def make_record(scene, kind, ticks, noise=None, entropy=11,
                mass_scale=1.2, friction_scale=1.3):
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=entropy, spawn_key=(8,)))
    gt = default_ground_truth(scene, mass_scale=mass_scale,
                              friction_scale=friction_scale, noise=noise)
    return script_trajectory(kind, scene, gt, rng, ticks=ticks)


@pytest.fixture(scope="session")
def spam_record(spam_scene):
    """Medium-length noisy spam record shared by tracker and harness tests."""
    return make_record(spam_scene, "grasp-rotate", 180)


@pytest.fixture(scope="session")
def spam_record_clean(spam_scene):
    return make_record(spam_scene, "grasp-rotate", 180,
                       noise=ObservationNoise.zero(), entropy=21)


@pytest.fixture(scope="session")
def spam_record_twin(spam_scene):
    """Noise-free record whose hidden parameters equal the nominal prior."""
    return make_record(spam_scene, "grasp-rotate", 60,
                       noise=ObservationNoise.zero(), entropy=31,
                       mass_scale=1.0, friction_scale=1.0)
