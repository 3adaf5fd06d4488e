"""Batch tracking experiments over recorded trajectories.

A cell is one (trajectory, tracker variant, seed). ``run_one`` replays the
recorded control stream through a tracker while scoring the published pose
against the recorded ground truth with the ADD metric (mean vertex distance).
``run_experiment`` iterates a grid of cells in a fixed order so reruns emit
byte-identical metrics files.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..cost import CostWeights, calibrate_weights, cost_breakdown
from ..geometry import NOISE_REGIMES, PointCloud, Pose2, add_metric
from ..optimizers import ExplorationConfig, PboConfig
from ..physics import ControlCommand, PhysicsError, SceneSpec
from ..tracker import Tracker, TrackerConfig
from .trajectory import TrajectoryRecord

__all__ = [
    "TrackerVariant", "ExperimentSpec", "RunResult",
    "default_theta_prior_std", "default_exploration", "default_tracker_config",
    "calibrate_weights_from_record", "run_one", "run_experiment", "ablate",
    "summarize", "emit_metrics", "load_results",
]

OPTIMIZERS = ("wrs", "reps", "pbo", "eye", "olp")

RUNS_SCHEMA = "# inhand-runs-v1"
SUMMARY_SCHEMA = "# inhand-summary-v1"
SERIES_SCHEMA = "# inhand-series-v1"


# -- default knobs -----------------------------------------------------------

def default_theta_prior_std(scene: SceneSpec) -> np.ndarray:
    """Lane-initialization spread around the scene's nominal parameters.

    Relative for the scale-bearing parameters, absolute for the unit-bounded
    ones, so the same fractions work across object shapes.
    """
    p = scene.params
    return np.array([
        0.20 * p.mass,
        0.20 * p.inertia,
        0.15,                       # friction
        0.03,                       # restitution
        0.15 * p.kp,
        0.15 * p.kd,
        0.15 * p.contact_stiffness,
    ])


def default_exploration(scene: SceneSpec) -> ExplorationConfig:
    """Per-update perturbation spread, the "med" level ablations scale.

    The wrench sigma must clear table-level static friction (roughly
    mu*m*g, 0.8 N for the stock objects) often enough to slide a resting
    object a millimetre or two, else ensembles that lost their lateral
    spread to resampling can never recover it; it must stay below the
    several-newton grip-slip threshold so kicks do not wreck held objects.
    The torque sigma is kept small against the object inertias (~5e-5):
    harder spins fling lanes so far that one bad window pick dominates the
    published-pose error spread.
    """
    return ExplorationConfig(
        sigma_params=0.4 * default_theta_prior_std(scene),
        sigma_force=0.6,
        sigma_torque=0.0003,
    )


@dataclass(frozen=True)
class TrackerVariant:
    """One named tracker configuration in an experiment grid."""

    name: str
    optimizer: str = "wrs"
    regime: str = "med"             # initial pose noise level
    num_lanes: int = 40
    window: int = 15
    exploration_scale: float = 1.0
    theta_prior_scale: float = 1.0  # 0 pins every lane to the nominal params
    contacts_off: bool = False
    slip_off: bool = False

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.regime not in NOISE_REGIMES:
            raise ValueError(f"unknown noise regime {self.regime!r}")


def _ablated(weights: CostWeights, contacts_off: bool, slip_off: bool) -> CostWeights:
    if contacts_off:
        weights = weights.replace(contact_agreement=0.0, force_magnitude=0.0,
                                  force_angle=0.0)
    if slip_off:
        weights = weights.replace(slip_agreement=0.0, slip_angle=0.0,
                                  rot_slip_agreement=0.0, rot_slip_direction=0.0)
    return weights


def default_tracker_config(scene: SceneSpec, variant: TrackerVariant,
                           seed: int = 0,
                           weights: CostWeights | None = None,
                           jobs: int = 1) -> TrackerConfig:
    return TrackerConfig(
        num_lanes=variant.num_lanes,
        window=variant.window,
        optimizer=variant.optimizer,
        # survivors scale with the lane count so small-K ablations stay valid
        pbo=PboConfig(k_best=max(1, variant.num_lanes // 2)),
        weights=_ablated(weights or CostWeights(), variant.contacts_off,
                         variant.slip_off),
        pose_noise=NOISE_REGIMES[variant.regime],
        theta_prior_std=variant.theta_prior_scale * default_theta_prior_std(scene),
        exploration=default_exploration(scene).scaled(variant.exploration_scale),
        seed=seed,
        jobs=jobs,
    )


# -- weight calibration ------------------------------------------------------

def calibrate_weights_from_record(scene: SceneSpec, record: TrajectoryRecord,
                                  num_lanes: int = 8, seed: int = 0,
                                  stride: int = 1) -> CostWeights:
    """Balance the cost terms on a static throwaway ensemble rollout.

    Lanes are drawn like a tracker's but never resampled; every surviving
    lane contributes its per-term error magnitudes each tick, and the weight
    of each term becomes the reciprocal of its mean observed magnitude.
    """
    probe = TrackerVariant("calibration", optimizer="eye",
                           regime="med", num_lanes=num_lanes)
    cfg = default_tracker_config(scene, probe, seed=seed)
    tracker = Tracker(scene, cfg, record.initial_state,
                      record.initial_state.object_pose)
    samples: list[list[float]] = [[] for _ in range(10)]
    for tk in record.ticks[::max(stride, 1)]:
        cmd = ControlCommand(tk.control)
        for lane in tracker.lanes:
            if lane.dead:
                continue
            try:
                obs = lane.step(cmd)
            except PhysicsError:
                continue
            terms = cost_breakdown(obs, tk.observation)
            for k in range(10):
                samples[k].append(float(terms[k]))
    return calibrate_weights(samples)


# -- running cells -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """Grid of cells: every trajectory crossed with every variant and seed."""

    trajectories: tuple          # of (label, SceneSpec, TrajectoryRecord)
    variants: tuple              # of TrackerVariant
    seeds: tuple                 # distinct ints
    output_dir: Path | None = None
    jobs: int = 1

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ValueError("need at least one repetition seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if len(self.variants) < 1 or len(self.trajectories) < 1:
            raise ValueError("empty experiment grid")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError("variant names must be unique")


@dataclass
class RunResult:
    trajectory: str
    variant: str
    seed: int
    add_series: np.ndarray       # (T,) per-tick ADD in meters
    diverged: int                # lanes dead when the run ended

    @property
    def mean_add(self) -> float:
        return float(np.mean(self.add_series))

    @property
    def std_add(self) -> float:
        return float(np.std(self.add_series))

    @property
    def max_add(self) -> float:
        return float(np.max(self.add_series))

    @property
    def final_add(self) -> float:
        return float(self.add_series[-1])


def _initial_estimate(record: TrajectoryRecord, variant: TrackerVariant,
                      seed: int) -> Pose2:
    # one offset direction per seed, scaled by the regime, so runs that
    # differ only in optimizer or regime stay seed-paired
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(4,)))
    u = rng.standard_normal(3)
    noise = NOISE_REGIMES[variant.regime]
    gt0 = record.initial_state.object_pose
    return Pose2(gt0.angle + u[2] * noise.sigma_rotation,
                 gt0.translation + u[:2] * noise.sigma_translation)


def run_one(scene: SceneSpec, record: TrajectoryRecord, variant: TrackerVariant,
            seed: int, weights: CostWeights | None = None,
            label: str | None = None, jobs: int = 1) -> RunResult:
    """Replay one trajectory through one tracker configuration."""
    record.validate_scene(scene)
    cfg = default_tracker_config(scene, variant, seed=seed, weights=weights,
                                 jobs=jobs)
    tracker = Tracker(scene, cfg, record.initial_state,
                      _initial_estimate(record, variant, seed))
    cloud = PointCloud(scene.object.vertices.copy())
    add = np.empty(len(record.ticks))
    for t, tk in enumerate(record.ticks):
        out = tracker.tick(ControlCommand(tk.control), tk.observation)
        add[t] = add_metric(cloud, tk.gt_pose, out.pose)
    return RunResult(
        trajectory=label or record.kind,
        variant=variant.name,
        seed=seed,
        add_series=add,
        diverged=tracker.diverged_count(),
    )


def run_experiment(spec: ExperimentSpec,
                   progress=None) -> list[RunResult]:
    """Run every cell in a fixed order; optionally emit metrics files."""
    weights_by_label: dict[str, CostWeights] = {}
    for label, scene, record in spec.trajectories:
        record.validate_scene(scene)
        weights_by_label[label] = calibrate_weights_from_record(scene, record)

    cells = [(label, scene, record, variant, seed)
             for label, scene, record in spec.trajectories
             for variant in spec.variants
             for seed in spec.seeds]

    def _cell(args):
        label, scene, record, variant, seed = args
        res = run_one(scene, record, variant, seed,
                      weights=weights_by_label[label], label=label)
        if progress is not None:
            progress(res)
        return res

    if spec.jobs > 1:
        with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]

    if spec.output_dir is not None:
        emit_metrics(results, spec.output_dir)
    return results


# -- ablation grids ----------------------------------------------------------

_EXPLORATION_LEVELS = {"low": 0.1, "med": 1.0, "high": 10.0}
_LANE_COUNTS = (1, 10, 40, 100)


def ablate(base: ExperimentSpec, axis: str) -> list[ExperimentSpec]:
    """Variant grids for one ablation axis of the base experiment."""
    if axis == "exploration":
        out = []
        for level, scale in _EXPLORATION_LEVELS.items():
            variants = tuple(
                replace(v, name=f"{v.name}-explore-{level}",
                        exploration_scale=v.exploration_scale * scale)
                for v in base.variants)
            out.append(replace(base, variants=variants,
                               output_dir=_subdir(base, f"explore-{level}")))
        return out
    if axis == "K":
        out = []
        for k in _LANE_COUNTS:
            variants = tuple(replace(v, name=f"{v.name}-K{k}", num_lanes=k)
                             for v in base.variants)
            out.append(replace(base, variants=variants,
                               output_dir=_subdir(base, f"K{k}")))
        return out
    if axis == "contacts_off":
        variants = tuple(replace(v, name=f"{v.name}-nocontact", contacts_off=True)
                         for v in base.variants)
        return [replace(base, variants=variants,
                        output_dir=_subdir(base, "contacts-off"))]
    if axis == "slip_off":
        variants = tuple(replace(v, name=f"{v.name}-noslip", slip_off=True)
                         for v in base.variants)
        return [replace(base, variants=variants,
                        output_dir=_subdir(base, "slip-off"))]
    raise ValueError(f"unknown ablation axis {axis!r}; expected one of "
                     "exploration, K, contacts_off, slip_off")


def _subdir(base: ExperimentSpec, leaf: str) -> Path | None:
    return None if base.output_dir is None else Path(base.output_dir) / leaf


# -- metrics files -----------------------------------------------------------

_RUN_COLUMNS = ("trajectory", "variant", "seed", "num_ticks", "mean_add",
                "std_add", "max_add", "final_add", "diverged")
_SUMMARY_COLUMNS = ("trajectory", "variant", "runs", "mean_add",
                    "std_between_seeds", "mean_within_std", "max_add",
                    "mean_final_add")


def _sorted_results(results) -> list[RunResult]:
    return sorted(results, key=lambda r: (r.trajectory, r.variant, r.seed))


def summarize(results) -> list[dict]:
    """One aggregate row per (trajectory, variant) cell."""
    if not results:
        raise ValueError("no results to summarize")
    groups: dict[tuple, list[RunResult]] = {}
    for r in _sorted_results(results):
        groups.setdefault((r.trajectory, r.variant), []).append(r)
    rows = []
    for (traj, variant), rs in sorted(groups.items()):
        means = np.array([r.mean_add for r in rs])
        rows.append({
            "trajectory": traj,
            "variant": variant,
            "runs": len(rs),
            "mean_add": float(np.mean(means)),
            "std_between_seeds": float(np.std(means)),
            "mean_within_std": float(np.mean([r.std_add for r in rs])),
            "max_add": float(np.max([r.max_add for r in rs])),
            "mean_final_add": float(np.mean([r.final_add for r in rs])),
        })
    return rows


def _series_name(r: RunResult) -> str:
    return f"{r.trajectory}__{r.variant}__s{r.seed}.csv"


def emit_metrics(results, out_dir) -> list[Path]:
    """Write per-tick series plus run and cell tables; deterministic bytes."""
    if not results:
        raise ValueError("no results to emit")
    out = Path(out_dir)
    series_dir = out / "series"
    series_dir.mkdir(parents=True, exist_ok=True)
    written = []
    ordered = _sorted_results(results)

    for r in ordered:
        buf = io.StringIO()
        buf.write(SERIES_SCHEMA + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("tick", "add"))
        for t, v in enumerate(r.add_series):
            w.writerow((t, repr(float(v))))
        p = series_dir / _series_name(r)
        p.write_text(buf.getvalue())
        written.append(p)

    buf = io.StringIO()
    buf.write(RUNS_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_RUN_COLUMNS)
    for r in ordered:
        w.writerow((r.trajectory, r.variant, r.seed, len(r.add_series),
                    repr(r.mean_add), repr(r.std_add), repr(r.max_add),
                    repr(r.final_add), r.diverged))
    runs_path = out / "runs.csv"
    runs_path.write_text(buf.getvalue())
    written.append(runs_path)

    buf = io.StringIO()
    buf.write(SUMMARY_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_SUMMARY_COLUMNS)
    for row in summarize(ordered):
        w.writerow((row["trajectory"], row["variant"], row["runs"],
                    repr(row["mean_add"]), repr(row["std_between_seeds"]),
                    repr(row["mean_within_std"]), repr(row["max_add"]),
                    repr(row["mean_final_add"])))
    summary_path = out / "summary.csv"
    summary_path.write_text(buf.getvalue())
    written.append(summary_path)
    return written


def load_results(out_dir) -> list[RunResult]:
    """Rebuild RunResults from the emitted files (series + runs table)."""
    out = Path(out_dir)
    runs_path = out / "runs.csv"
    text = runs_path.read_text().splitlines()
    if not text or text[0] != RUNS_SCHEMA:
        raise ValueError(f"unsupported runs schema in {runs_path}")
    reader = csv.DictReader(text[1:])
    results = []
    for row in reader:
        series_path = out / "series" / (
            f"{row['trajectory']}__{row['variant']}__s{row['seed']}.csv")
        lines = series_path.read_text().splitlines()
        if not lines or lines[0] != SERIES_SCHEMA:
            raise ValueError(f"unsupported series schema in {series_path}")
        body = list(csv.DictReader(lines[1:]))
        series = np.array([float(d["add"]) for d in body])
        if len(series) != int(row["num_ticks"]):
            raise ValueError(f"series length mismatch for {series_path}")
        results.append(RunResult(
            trajectory=row["trajectory"],
            variant=row["variant"],
            seed=int(row["seed"]),
            add_series=series,
            diverged=int(row["diverged"]),
        ))
    return results
