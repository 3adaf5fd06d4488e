"""Observation-mismatch cost, windowed cost accumulation, and best-lane selection.

The instantaneous cost compares one simulation's observation against the
ground-truth observation term by term; a window accumulator keeps the running
average the selector uses. Term layout (index into the breakdown vector):

  0 joint_position      L2 distance between joint-angle vectors
  1 sensor_position     per-sensor L2 distance between sensor positions
  2 sensor_rotation     per-sensor relative rotation angle
  3 contact_agreement   1 per sensor whose binary contact state disagrees
  4 force_magnitude     |difference of force magnitudes|, only on agreement
  5 force_angle         angle between force vectors, only on agreement
  6 slip_agreement      1 per sensor whose slipping flag disagrees
  7 slip_angle          angle between slip directions, only on agreement
  8 rot_slip_agreement  1 per sensor whose rotational-slip flag disagrees
  9 rot_slip_direction  |difference of direction bits|, only on agreement

Force terms are evaluated only when both sides agree they are in contact and
both report a nonzero force; slip and rotational-slip comparison terms are
evaluated only when the respective flags agree and are set. This prevents
undefined angles on zero vectors (see geometry.vector_angle_between).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import magnitude_difference, rotation_angle_between, vector_angle_between

__all__ = [
    "CostWeights",
    "CostAccumulator",
    "TERM_NAMES",
    "cost_breakdown",
    "instantaneous_cost",
    "best_index",
    "calibrate_weights",
]

TERM_NAMES = (
    "joint_position",
    "sensor_position",
    "sensor_rotation",
    "contact_agreement",
    "force_magnitude",
    "force_angle",
    "slip_agreement",
    "slip_angle",
    "rot_slip_agreement",
    "rot_slip_direction",
)

_FORCE_EPS = 1e-12


@dataclass(frozen=True)
class CostWeights:
    """Nonnegative weight per cost term; at least one must be positive."""

    joint_position: float = 1.0
    sensor_position: float = 1.0
    sensor_rotation: float = 1.0
    contact_agreement: float = 1.0
    force_magnitude: float = 1.0
    force_angle: float = 1.0
    slip_agreement: float = 1.0
    slip_angle: float = 1.0
    rot_slip_agreement: float = 1.0
    rot_slip_direction: float = 1.0

    def __post_init__(self):
        vec = self.as_array()
        if np.any(vec < 0.0) or not np.all(np.isfinite(vec)):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(vec > 0.0):
            raise ValueError("at least one weight must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in TERM_NAMES], dtype=np.float64)

    @staticmethod
    def from_array(arr) -> "CostWeights":
        arr = np.asarray(arr, dtype=np.float64).reshape(len(TERM_NAMES))
        return CostWeights(**{name: float(v) for name, v in zip(TERM_NAMES, arr)})

    def to_dict(self) -> dict:
        return {name: float(getattr(self, name)) for name in TERM_NAMES}

    @staticmethod
    def from_dict(d: dict) -> "CostWeights":
        return CostWeights(**{k: float(v) for k, v in d.items()})

    def replace(self, **kwargs) -> "CostWeights":
        vals = self.to_dict()
        vals.update(kwargs)
        return CostWeights(**vals)


def cost_breakdown(sim_obs, gt_obs) -> np.ndarray:
    """Unweighted per-term cost vector (10,) for one observation pair."""
    if sim_obs.joint_positions.shape != gt_obs.joint_positions.shape:
        raise ValueError("joint dimension mismatch between observations")
    if sim_obs.num_sensors != gt_obs.num_sensors:
        raise ValueError("sensor count mismatch between observations")

    terms = np.zeros(len(TERM_NAMES))
    terms[0] = float(np.linalg.norm(sim_obs.joint_positions - gt_obs.joint_positions))

    for l in range(sim_obs.num_sensors):
        terms[1] += float(np.linalg.norm(sim_obs.sensor_positions[l] - gt_obs.sensor_positions[l]))
        terms[2] += rotation_angle_between(sim_obs.sensor_rotations[l], gt_obs.sensor_rotations[l])

        contact_agrees = bool(sim_obs.contact_flags[l]) == bool(gt_obs.contact_flags[l])
        if not contact_agrees:
            terms[3] += 1.0
        elif bool(sim_obs.contact_flags[l]):
            fa, fb = sim_obs.contact_forces[l], gt_obs.contact_forces[l]
            if np.linalg.norm(fa) > _FORCE_EPS and np.linalg.norm(fb) > _FORCE_EPS:
                terms[4] += abs(magnitude_difference(fa, fb))
                terms[5] += vector_angle_between(fa, fb)

        slip_agrees = bool(sim_obs.slipping_flags[l]) == bool(gt_obs.slipping_flags[l])
        if not slip_agrees:
            terms[6] += 1.0
        elif bool(sim_obs.slipping_flags[l]):
            terms[7] += vector_angle_between(sim_obs.slip_directions[l], gt_obs.slip_directions[l])

        rot_agrees = bool(sim_obs.rot_slipping_flags[l]) == bool(gt_obs.rot_slipping_flags[l])
        if not rot_agrees:
            terms[8] += 1.0
        elif bool(sim_obs.rot_slipping_flags[l]):
            terms[9] += abs(float(sim_obs.rot_slip_directions[l]) - float(gt_obs.rot_slip_directions[l]))

    return terms


def instantaneous_cost(sim_obs, gt_obs, weights: CostWeights) -> float:
    """Weighted observation-mismatch cost; zero iff all compared fields match."""
    return float(np.dot(weights.as_array(), cost_breakdown(sim_obs, gt_obs)))


@dataclass
class CostAccumulator:
    """Ring buffer of the last <= window_length instantaneous costs.

    The reported average divides by the number of buffered entries, so during
    a partially filled window it is the mean over the ticks seen so far.
    """

    window_length: int
    _buffer: deque = field(default_factory=deque, repr=False)
    _sum: float = 0.0

    def __post_init__(self):
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")

    def push(self, cost: float) -> None:
        if not math.isfinite(cost):
            raise ValueError("cost must be finite")
        if cost < 0.0:
            raise ValueError("cost must be nonnegative")
        self._buffer.append(cost)
        self._sum += cost
        if len(self._buffer) > self.window_length:
            self._sum -= self._buffer.popleft()

    def average(self) -> float:
        if not self._buffer:
            return float("inf")
        return self._sum / len(self._buffer)

    def reset(self) -> None:
        self._buffer.clear()
        self._sum = 0.0

    def __len__(self) -> int:
        return len(self._buffer)


def best_index(averages) -> int:
    """Index of the minimum average cost; ties break to the lowest index."""
    averages = list(averages)
    if not averages:
        raise ValueError("empty cost list")
    best = 0
    for i in range(1, len(averages)):
        if averages[i] < averages[best]:
            best = i
    return best


def calibrate_weights(term_samples) -> CostWeights:
    """Weights that normalize each term's observed mean magnitude to ~1.

    ``term_samples`` maps each of the 10 terms (by index or name) to a
    sequence of observed magnitudes. The weight is 1/mean(|samples|), clamped
    to [1e-3, 1e3]; a term with no nonzero samples falls back to weight 1.
    """
    if isinstance(term_samples, dict):
        samples = [np.asarray(term_samples.get(name, term_samples.get(i, [])), dtype=np.float64)
                   for i, name in enumerate(TERM_NAMES)]
    else:
        samples = [np.asarray(s, dtype=np.float64) for s in term_samples]
        if len(samples) != len(TERM_NAMES):
            raise ValueError(f"expected {len(TERM_NAMES)} per-term sample sets")
    if all(s.size == 0 for s in samples):
        raise ValueError("empty calibration trace")

    weights = np.ones(len(TERM_NAMES))
    for k, s in enumerate(samples):
        if s.size == 0:
            continue
        mean_mag = float(np.mean(np.abs(s)))
        if mean_mag > 0.0:
            weights[k] = min(1e3, max(1e-3, 1.0 / mean_mag))
    return CostWeights.from_array(weights)
