"""Ensemble pose tracker.

Runs K forward simulations ("lanes") in lockstep with the real control
stream. Every tick each lane is scored against the ground-truth observation;
the lane with the lowest windowed average cost supplies the pose estimate.
Every T ticks the configured optimizer resamples lanes toward low cost and
perturbs their parameters and object state.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cost import CostAccumulator, CostWeights, best_index, instantaneous_cost
from .geometry import Pose2, PoseNoise, sample_pose
from .optimizers import (ExplorationConfig, OptimizerRule, PboConfig,
                         RepsConfig, WrsConfig, make_optimizer,
                         resample_and_perturb)
from .physics import (ControlCommand, Observation, PhysicsError, SceneSpec,
                      Simulator, WorldState)

__all__ = ["ThetaPrior", "TrackerConfig", "TrackOutput", "Tracker", "initialize"]

# post-settle penetration beyond this means the draw landed inside a body
UNRESOLVABLE_PENETRATION = 3.0e-3
SETTLE_TRIGGER = 1.0e-4
MAX_INIT_ATTEMPTS = 20


@dataclass(frozen=True)
class ThetaPrior:
    """Initial normal distribution over simulation parameters."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64).copy()
        s = np.asarray(self.std, dtype=np.float64).copy()
        if m.shape != s.shape or np.any(s < 0):
            raise ValueError("prior mean/std shape mismatch or negative std")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + rng.normal(0.0, 1.0, size=self.mean.shape) * self.std


@dataclass(frozen=True)
class TrackerConfig:
    num_lanes: int = 40                  # K
    window: int = 15                     # T, ticks between optimizer updates
    optimizer: str = "wrs"
    wrs: WrsConfig = field(default_factory=WrsConfig)
    reps: RepsConfig = field(default_factory=RepsConfig)
    pbo: PboConfig = field(default_factory=PboConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    pose_noise: PoseNoise = field(default_factory=lambda: PoseNoise(0.0, 0.0))
    theta_prior_std: np.ndarray = field(default_factory=lambda: np.zeros(7))
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.num_lanes < 1:
            raise ValueError("need at least one lane")
        if self.window < 1:
            raise ValueError("window must be at least one tick")
        if self.optimizer.lower() == "olp" and self.num_lanes != 1:
            # open-loop playback is defined as a single simulation
            object.__setattr__(self, "num_lanes", 1)
        object.__setattr__(self, "theta_prior_std",
                           np.asarray(self.theta_prior_std, dtype=np.float64).copy())


@dataclass
class TrackOutput:
    """What the tracker publishes for one tick."""

    tick: int
    best_lane: int
    pose: Pose2
    lane_costs: np.ndarray
    wall_clock: float
    updated: bool = False
    eta_star: float | None = None


class Tracker:
    """K-lane ensemble; see module docstring. Single-caller: one tick at a time."""

    def __init__(self, scene: SceneSpec, config: TrackerConfig,
                 initial_state: WorldState, initial_pose_estimate: Pose2):
        self.scene = scene
        self.config = config
        self.rule: OptimizerRule = make_optimizer(
            config.optimizer, wrs=config.wrs, reps=config.reps, pbo=config.pbo)
        self.prior = ThetaPrior(scene.params.as_array(), config.theta_prior_std)
        self.lanes: list[Simulator] = []
        self.accs: list[CostAccumulator] = []
        k = config.num_lanes
        for i in range(k):
            rng = self._rng(0, i)
            sim = self._draw_lane(initial_state, initial_pose_estimate, rng)
            self.lanes.append(sim)
            self.accs.append(CostAccumulator(config.window))
        self.i_star = 0
        self.tick_index = 0
        self.update_round = 0
        self._pool = None
        if config.jobs > 1:
            from concurrent.futures import ThreadPoolExecutor
            self._pool = ThreadPoolExecutor(max_workers=config.jobs)

    # -- randomness: one stream per (purpose, index), reproducible by seed ----

    def _rng(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.config.seed, spawn_key=tuple(key))
        return np.random.default_rng(ss)

    # -- initialization -------------------------------------------------------

    def _draw_lane(self, initial_state: WorldState, estimate: Pose2,
                   rng: np.random.Generator) -> Simulator:
        hold = ControlCommand(initial_state.joint_positions.copy())
        for _attempt in range(MAX_INIT_ATTEMPTS):
            pose = sample_pose(estimate, self.config.pose_noise, rng)
            theta = self.scene.bounds.clamp(self.prior.sample(rng))
            state = WorldState(initial_state.joint_positions,
                               initial_state.joint_velocities,
                               pose, initial_state.object_velocity)
            sim = Simulator(self.scene, state=state)
            sim.set_params(theta)
            if float(np.min(sim.signed_gaps())) >= -SETTLE_TRIGGER:
                return sim
            # project out of penetration with one solver step rather than
            # rejecting the draw, which would bias poses toward free space
            try:
                sim.step(hold)
            except PhysicsError:
                continue
            if float(np.min(sim.signed_gaps())) >= -UNRESOLVABLE_PENETRATION:
                return sim
        raise RuntimeError(
            f"could not draw a feasible lane pose in {MAX_INIT_ATTEMPTS} attempts")

    # -- per-tick loop --------------------------------------------------------

    def _step_lane(self, i: int, control: ControlCommand,
                   gt_obs: Observation) -> None:
        sim = self.lanes[i]
        if sim.dead:
            return
        try:
            obs = sim.step(control)
        except PhysicsError:
            return
        self.accs[i].push(instantaneous_cost(obs, gt_obs, self.config.weights))

    def tick(self, control: ControlCommand, gt_obs: Observation) -> TrackOutput:
        t0 = time.perf_counter()
        self.tick_index += 1
        k = self.config.num_lanes
        if self._pool is not None:
            list(self._pool.map(
                lambda i: self._step_lane(i, control, gt_obs), range(k)))
        else:
            for i in range(k):
                self._step_lane(i, control, gt_obs)
        costs = self.lane_costs()
        self.i_star = best_index(costs)
        out = TrackOutput(
            tick=self.tick_index,
            best_lane=self.i_star,
            pose=self.lanes[self.i_star].object_pose(),
            lane_costs=costs,
            wall_clock=time.perf_counter() - t0,
        )
        # the update runs on the window boundary, after publishing the
        # estimate, so every estimate comes from un-resampled lanes
        if self.tick_index % self.config.window == 0:
            self.update_round += 1
            plan = self.rule.plan(costs, self._rng(1, self.update_round))
            if not plan.is_noop:
                resample_and_perturb(self, plan, self.config.exploration,
                                     self._rng(2, self.update_round))
                out.updated = True
                out.eta_star = plan.eta_star
        out.wall_clock = time.perf_counter() - t0
        return out

    def lane_costs(self) -> np.ndarray:
        return np.array([np.inf if self.lanes[i].dead else self.accs[i].average()
                         for i in range(self.config.num_lanes)])

    def current_estimate(self) -> Pose2:
        if self.tick_index == 0:
            raise RuntimeError("no estimate before the first tick")
        return self.lanes[self.i_star].object_pose()

    def diverged_count(self) -> int:
        return sum(1 for sim in self.lanes if sim.dead)

    def inject_divergence(self, lane: int) -> None:
        """Force a lane into the diverged state (test and demo hook)."""
        self.lanes[lane].dead = True

    # -- ensemble protocol used by optimizers.resample_and_perturb -----------

    @property
    def size(self) -> int:
        return self.config.num_lanes

    def snapshot_lane(self, i: int) -> dict:
        return self.lanes[i].snapshot()

    def restore_lane(self, i: int, snap: dict) -> None:
        self.lanes[i].restore(snap)

    def get_params(self, i: int) -> np.ndarray:
        return self.lanes[i].get_params()

    def set_params(self, i: int, theta) -> None:
        self.lanes[i].set_params(theta)

    def queue_wrench(self, i: int, force, torque: float) -> None:
        self.lanes[i].queue_wrench(force, torque)

    def reset_cost(self, i: int) -> None:
        self.accs[i].reset()


def initialize(scene: SceneSpec, config: TrackerConfig,
               initial_state: WorldState, initial_pose_estimate: Pose2) -> Tracker:
    """Build a tracker; alias for the Tracker constructor."""
    return Tracker(scene, config, initial_state, initial_pose_estimate)
