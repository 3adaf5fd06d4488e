"""Finger chain FK/IK: independent frame oracle, round trips, reach edges."""
import numpy as np
import pytest

from inhand.physics.kinematics import finger_ik, forward_kinematics, gripper_ik
from inhand.physics.scene import GripperSpec


def oracle_finger(gripper, f, q):
    # independent formulation: complex-plane chain instead of per-axis trig
    phi1 = gripper.base_angles[f] + q[2 * f]
    phi2 = phi1 + q[2 * f + 1]
    anchor = gripper.anchors[f][0] + 1j * gripper.anchors[f][1]
    elbow = anchor + gripper.link_lengths[0] * np.exp(1j * phi1)
    tip = elbow + gripper.link_lengths[1] * np.exp(1j * phi2)
    return elbow, tip, phi1, phi2


@pytest.fixture(scope="module")
def gripper():
    return GripperSpec()


class TestForwardKinematics:
    def test_matches_complex_chain_oracle(self, gripper):
        rng = np.random.default_rng(0)
        for _ in range(200):
            q = rng.uniform(-2.2, 2.2, size=4)
            frames = forward_kinematics(gripper, q)
            for f in range(2):
                elbow, tip, phi1, phi2 = oracle_finger(gripper, f, q)
                assert np.allclose(frames.elbows[f], [elbow.real, elbow.imag],
                                   atol=1e-12)
                assert np.allclose(frames.tips[f], [tip.real, tip.imag],
                                   atol=1e-12)
                assert np.allclose(frames.link_angles[f], [phi1, phi2],
                                   atol=1e-12)

    def test_link_lengths_preserved(self, gripper):
        rng = np.random.default_rng(1)
        for _ in range(50):
            frames = forward_kinematics(gripper, rng.uniform(-2.0, 2.0, size=4))
            for f in range(2):
                assert np.isclose(np.linalg.norm(frames.elbows[f] - frames.anchors[f]),
                                  gripper.link_lengths[0], rtol=1e-12)
                assert np.isclose(np.linalg.norm(frames.tips[f] - frames.elbows[f]),
                                  gripper.link_lengths[1], rtol=1e-12)

    def test_tip_angles_are_distal_link_angles(self, gripper):
        frames = forward_kinematics(gripper, [0.1, 0.2, -0.3, 0.4])
        assert np.array_equal(frames.tip_angles, frames.link_angles[:, 1])

    def test_home_pose_is_mirror_symmetric(self, gripper):
        # mirrored anchors with mirrored home joints put the tips symmetric
        # about x=0 and below the anchors
        frames = forward_kinematics(gripper, gripper.home_joints)
        assert np.allclose(frames.tips[0], [-frames.tips[1][0], frames.tips[1][1]],
                           atol=1e-12)
        assert np.all(frames.tips[:, 1] < gripper.anchors[:, 1])


class TestFingerIk:
    def test_round_trip_recovers_joints(self, gripper):
        rng = np.random.default_rng(2)
        for _ in range(200):
            q1 = rng.uniform(-2.0, 2.0)
            q2 = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 2.0)
            f = rng.integers(0, 2)
            tip = forward_kinematics(gripper, _padded(f, q1, q2)).tips[f]
            got = finger_ik(gripper, f, tip, elbow_sign=np.sign(q2))
            assert np.allclose(got, [q1, q2], atol=1e-9)
            tip2 = forward_kinematics(gripper, _padded(f, *got)).tips[f]
            assert np.allclose(tip2, tip, atol=1e-9)

    def test_far_target_projects_onto_outer_reach(self, gripper):
        reach = float(gripper.link_lengths.sum())
        target = gripper.anchors[0] + np.array([0.9, 0.4])
        q1, q2 = finger_ik(gripper, 0, target)
        tip = forward_kinematics(gripper, _padded(0, q1, q2)).tips[0]
        d = tip - gripper.anchors[0]
        assert np.isclose(np.linalg.norm(d), reach, atol=1e-6)
        unit = np.array([0.9, 0.4]) / np.hypot(0.9, 0.4)
        assert np.allclose(d / np.linalg.norm(d), unit, atol=1e-6)

    def test_anchor_target_folds_to_joint_limit(self, gripper):
        # the inner-annulus fold needs q2 near pi, which the limit clips first
        q1, q2 = finger_ik(gripper, 0, gripper.anchors[0])
        assert q2 == gripper.joint_limit
        tip = forward_kinematics(gripper, _padded(0, q1, q2)).tips[0]
        l1, l2 = gripper.link_lengths
        folded = np.sqrt(l1**2 + l2**2 + 2 * l1 * l2 * np.cos(q2))
        assert np.isclose(np.linalg.norm(tip - gripper.anchors[0]), folded,
                          rtol=1e-9)

    def test_joints_respect_limit(self, gripper):
        rng = np.random.default_rng(3)
        lim = gripper.joint_limit
        for _ in range(300):
            target = rng.uniform(-0.5, 0.5, size=2)
            for f in range(2):
                q1, q2 = finger_ik(gripper, f, target, rng.choice([-1.0, 1.0]))
                assert -lim <= q1 <= lim and -lim <= q2 <= lim

    def test_zero_elbow_sign_defaults_positive(self, gripper):
        target = gripper.anchors[0] + np.array([0.05, -0.15])
        _, q2 = finger_ik(gripper, 0, target, elbow_sign=0.0)
        assert q2 >= 0.0


class TestGripperIk:
    def test_matches_per_finger_calls(self, gripper):
        targets = np.array([[-0.05, 0.05], [0.06, 0.04]])
        q = gripper_ik(gripper, targets)
        assert (q[0], q[1]) == finger_ik(gripper, 0, targets[0], 1.0)
        assert (q[2], q[3]) == finger_ik(gripper, 1, targets[1], -1.0)

    def test_default_elbow_signs_bend_outward(self, gripper):
        targets = np.array([[-0.03, 0.02], [0.03, 0.02]])
        q = gripper_ik(gripper, targets)
        assert q[1] > 0.0 and q[3] < 0.0

    def test_round_trip_both_tips(self, gripper):
        targets = np.array([[-0.06, 0.03], [0.05, 0.01]])
        frames = forward_kinematics(gripper, gripper_ik(gripper, targets))
        assert np.allclose(frames.tips, targets, atol=1e-9)


def _padded(f, q1, q2):
    q = np.zeros(4)
    q[2 * f], q[2 * f + 1] = q1, q2
    return q
