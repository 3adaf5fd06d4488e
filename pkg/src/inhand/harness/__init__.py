"""Experiment layer: scripted demonstrations, noisy ground truth, batch runs."""
from .trajectory import (GroundTruthConfig, ObservationNoise, TrajectoryRecord,
                         TrajectoryRejected, TrajectoryTick, default_ground_truth,
                         dumps_trajectory, load_trajectory, loads_trajectory,
                         object_cloud, save_trajectory, script_trajectory)
from .experiments import (ExperimentSpec, RunResult, TrackerVariant, ablate,
                          calibrate_weights_from_record, default_exploration,
                          default_theta_prior_std, default_tracker_config,
                          emit_metrics, load_results, run_experiment, run_one,
                          summarize)

__all__ = [
    "GroundTruthConfig", "ObservationNoise", "TrajectoryRecord",
    "TrajectoryRejected", "TrajectoryTick", "default_ground_truth",
    "dumps_trajectory", "load_trajectory", "loads_trajectory",
    "object_cloud", "save_trajectory", "script_trajectory",
    "ExperimentSpec", "RunResult", "TrackerVariant", "ablate",
    "calibrate_weights_from_record", "default_exploration",
    "default_theta_prior_std", "default_tracker_config", "emit_metrics",
    "load_results", "run_experiment", "run_one", "summarize",
]
