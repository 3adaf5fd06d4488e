"""Ensemble tracker: twin replay, lane selection, update cadence, divergence."""
import numpy as np
import pytest

from inhand.geometry import PoseNoise, add_metric, PointCloud
from inhand.optimizers import ExplorationConfig
from inhand.physics import ControlCommand
from inhand.tracker import Tracker, TrackerConfig, initialize


def exact_config(**kw):
    """No initialization spread, no exploration: lanes replicate the truth."""
    base = dict(num_lanes=3, window=5, optimizer="eye",
                pose_noise=PoseNoise(0.0, 0.0),
                theta_prior_std=np.zeros(7),
                exploration=ExplorationConfig(np.zeros(7), 0.0, 0.0))
    base.update(kw)
    return TrackerConfig(**base)


def run_tracker(tracker, record, n=None):
    outs = []
    for tk in record.ticks[:n]:
        outs.append(tracker.tick(ControlCommand(tk.control), tk.observation))
    return outs


class TestTwinReplay:
    def test_exact_lanes_track_with_zero_error(self, spam_scene, spam_record_twin):
        tracker = Tracker(spam_scene, exact_config(),
                          spam_record_twin.initial_state,
                          spam_record_twin.initial_state.object_pose)
        cloud = PointCloud(spam_scene.object.vertices.copy())
        for tk, out in zip(spam_record_twin.ticks,
                           run_tracker(tracker, spam_record_twin)):
            # lanes are bit-exact twins of the recorded rollout
            assert add_metric(cloud, tk.gt_pose, out.pose) < 1e-12
            # identical lanes tie; argmin must stick to the first
            assert out.best_lane == 0
            assert np.all(out.lane_costs < 1e-6)

    def test_estimate_unavailable_before_first_tick(self, spam_scene,
                                                    spam_record_twin):
        tracker = Tracker(spam_scene, exact_config(),
                          spam_record_twin.initial_state,
                          spam_record_twin.initial_state.object_pose)
        with pytest.raises(RuntimeError):
            tracker.current_estimate()
        run_tracker(tracker, spam_record_twin, n=1)
        assert tracker.current_estimate() is not None


class TestInitialization:
    def test_lane_pose_spread_matches_noise_regime(self, spam_scene,
                                                   spam_record_twin):
        xs = []
        for seed in range(3):
            cfg = exact_config(num_lanes=40, seed=seed,
                               pose_noise=PoseNoise(0.005, 0.1))
            tracker = Tracker(spam_scene, cfg, spam_record_twin.initial_state,
                              spam_record_twin.initial_state.object_pose)
            xs.extend(s.object_pose().translation[0] for s in tracker.lanes)
        assert np.std(xs) == pytest.approx(0.005, abs=0.0015)

    def test_zero_noise_lanes_are_identical(self, spam_scene, spam_record_twin):
        tracker = Tracker(spam_scene, exact_config(),
                          spam_record_twin.initial_state,
                          spam_record_twin.initial_state.object_pose)
        ref = tracker.lanes[0]
        for sim in tracker.lanes[1:]:
            assert np.array_equal(sim.pose, ref.pose)
            assert np.array_equal(sim.theta, ref.theta)

    def test_seed_changes_draws(self, spam_scene, spam_record_twin):
        poses = []
        for seed in (0, 1):
            cfg = exact_config(num_lanes=4, seed=seed,
                               pose_noise=PoseNoise(0.005, 0.1))
            tracker = Tracker(spam_scene, cfg, spam_record_twin.initial_state,
                              spam_record_twin.initial_state.object_pose)
            poses.append(np.array([s.pose for s in tracker.lanes]))
        assert not np.array_equal(poses[0], poses[1])

    def test_initialize_alias(self, spam_scene, spam_record_twin):
        tracker = initialize(spam_scene, exact_config(),
                             spam_record_twin.initial_state,
                             spam_record_twin.initial_state.object_pose)
        assert isinstance(tracker, Tracker)


class TestConfigRules:
    def test_open_loop_forces_single_lane(self):
        assert TrackerConfig(optimizer="olp", num_lanes=40).num_lanes == 1

    def test_rejects_degenerate_sizes(self):
        with pytest.raises(ValueError):
            TrackerConfig(num_lanes=0)
        with pytest.raises(ValueError):
            TrackerConfig(window=0)


class TestUpdateCadence:
    def test_updates_fire_on_window_boundaries(self, spam_scene, spam_record):
        cfg = exact_config(optimizer="wrs", window=5, num_lanes=4,
                           pose_noise=PoseNoise(0.002, 0.05))
        tracker = Tracker(spam_scene, cfg, spam_record.initial_state,
                          spam_record.initial_state.object_pose)
        outs = run_tracker(tracker, spam_record, n=12)
        assert [o.updated for o in outs] == [
            t % 5 == 0 for t in range(1, 13)]

    def test_baselines_never_update(self, spam_scene, spam_record):
        for name in ("eye", "olp"):
            cfg = exact_config(optimizer=name, window=5,
                               pose_noise=PoseNoise(0.002, 0.05))
            tracker = Tracker(spam_scene, cfg, spam_record.initial_state,
                              spam_record.initial_state.object_pose)
            theta_before = [s.get_params() for s in tracker.lanes]
            outs = run_tracker(tracker, spam_record, n=12)
            assert not any(o.updated for o in outs)
            for before, sim in zip(theta_before, tracker.lanes):
                assert np.array_equal(before, sim.get_params())

    def test_update_resets_every_cost_window(self, spam_scene, spam_record):
        cfg = exact_config(optimizer="wrs", window=6, num_lanes=4,
                           pose_noise=PoseNoise(0.002, 0.05))
        tracker = Tracker(spam_scene, cfg, spam_record.initial_state,
                          spam_record.initial_state.object_pose)
        outs = run_tracker(tracker, spam_record, n=6)
        assert outs[-1].updated
        # published costs at the boundary come from the full pre-reset window
        assert np.all(np.isfinite(outs[-1].lane_costs))
        assert np.all(np.isinf(tracker.lane_costs()))

    def test_reps_reports_eta_on_update_ticks(self, spam_scene, spam_record):
        cfg = exact_config(optimizer="reps", window=5, num_lanes=4,
                           pose_noise=PoseNoise(0.002, 0.05))
        tracker = Tracker(spam_scene, cfg, spam_record.initial_state,
                          spam_record.initial_state.object_pose)
        outs = run_tracker(tracker, spam_record, n=10)
        for o in outs:
            assert (o.eta_star is not None) == o.updated


class TestDeterminism:
    def _estimates(self, scene, record, jobs, seed=3):
        cfg = TrackerConfig(num_lanes=6, window=5, optimizer="wrs", seed=seed,
                            jobs=jobs, pose_noise=PoseNoise(0.005, 0.1),
                            theta_prior_std=0.1 * scene.params.as_array(),
                            exploration=ExplorationConfig(
                                0.02 * scene.params.as_array(), 0.3, 0.0002))
        tracker = Tracker(scene, cfg, record.initial_state,
                          record.initial_state.object_pose)
        return np.array([list(o.pose.translation) + [o.pose.angle]
                         for o in run_tracker(tracker, record, n=20)])

    def test_same_seed_same_estimates(self, spam_scene, spam_record):
        a = self._estimates(spam_scene, spam_record, jobs=1)
        b = self._estimates(spam_scene, spam_record, jobs=1)
        assert np.array_equal(a, b)

    def test_thread_pool_does_not_change_results(self, spam_scene, spam_record):
        a = self._estimates(spam_scene, spam_record, jobs=1)
        b = self._estimates(spam_scene, spam_record, jobs=2)
        assert np.array_equal(a, b)

    def test_different_seed_diverges(self, spam_scene, spam_record):
        a = self._estimates(spam_scene, spam_record, seed=3, jobs=1)
        b = self._estimates(spam_scene, spam_record, seed=4, jobs=1)
        assert not np.array_equal(a, b)


class TestDivergence:
    def test_dead_lane_costs_inf_and_is_never_best(self, spam_scene,
                                                   spam_record):
        cfg = exact_config(optimizer="eye", num_lanes=3,
                           pose_noise=PoseNoise(0.002, 0.05))
        tracker = Tracker(spam_scene, cfg, spam_record.initial_state,
                          spam_record.initial_state.object_pose)
        run_tracker(tracker, spam_record, n=2)
        tracker.inject_divergence(0)
        outs = [tracker.tick(ControlCommand(tk.control), tk.observation)
                for tk in spam_record.ticks[2:8]]
        assert tracker.diverged_count() == 1
        for o in outs:
            assert o.lane_costs[0] == np.inf
            assert o.best_lane != 0

    def test_resampling_revives_dead_lane(self, spam_scene, spam_record):
        cfg = exact_config(optimizer="wrs", num_lanes=4, window=5,
                           pose_noise=PoseNoise(0.002, 0.05))
        tracker = Tracker(spam_scene, cfg, spam_record.initial_state,
                          spam_record.initial_state.object_pose)
        run_tracker(tracker, spam_record, n=2)
        tracker.inject_divergence(2)
        outs = [tracker.tick(ControlCommand(tk.control), tk.observation)
                for tk in spam_record.ticks[2:4]]
        assert tracker.diverged_count() == 1
        assert all(o.best_lane != 2 for o in outs)
        # the window-boundary resample copies an alive source over the corpse
        boundary = tracker.tick(ControlCommand(spam_record.ticks[4].control),
                                spam_record.ticks[4].observation)
        assert boundary.updated
        assert tracker.diverged_count() == 0
