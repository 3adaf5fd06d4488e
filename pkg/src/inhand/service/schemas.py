"""Request/response models for the HTTP service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class PoseModel(BaseModel):
    angle: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)


class StateModel(BaseModel):
    joint_positions: list[float]
    joint_velocities: list[float]
    object_pose: PoseModel
    object_velocity: tuple[float, float, float]


class ObservationModel(BaseModel):
    # compact field names shared with the trajectory file format
    q: list[float]
    sp: list[tuple[float, float]]
    sr: list[float]
    f: list[tuple[float, float]]
    sd: list[tuple[float, float]]
    rsd: list[float]
    c: list[bool]
    s: list[bool]
    rs: list[bool]


class VariantModel(BaseModel):
    name: str = "wrs-med"
    optimizer: str = "wrs"
    regime: str = "med"
    num_lanes: int = Field(default=40, ge=1)
    window: int = Field(default=15, ge=1)
    exploration_scale: float = Field(default=1.0, ge=0.0)
    theta_prior_scale: float = Field(default=1.0, ge=0.0)
    contacts_off: bool = False
    slip_off: bool = False


class NoiseModel(BaseModel):
    sigma_joint: float = Field(default=0.002, ge=0.0)
    sigma_sensor_pos: float = Field(default=0.0005, ge=0.0)
    sigma_sensor_rot: float = Field(default=0.002, ge=0.0)
    sigma_force: float = Field(default=0.05, ge=0.0)
    flag_flip_prob: float = Field(default=0.02, ge=0.0, le=1.0)


class RecordRequest(BaseModel):
    kind: str = "grasp-rotate"
    object: str = "spam"
    seed: int = 0
    ticks: int = Field(default=600, ge=1)
    noise: NoiseModel | None = None      # None: default synthetic noise
    zero_noise: bool = False
    mass_scale: float = 1.2
    friction_scale: float = 1.3


class RecordResponse(BaseModel):
    kind: str
    object: str
    num_ticks: int
    net_rotation: float
    scene_hash: str
    jsonl: str


class TrajectorySpec(BaseModel):
    """A recording recipe, a server-side path, or an inline document.

    Precedence: ``jsonl`` (content sent with the request) over ``path``
    (read on the server) over the (kind, object, seed, ticks) recipe, which
    records the trajectory on the fly. ``object`` must name a library object
    in all cases; it reconstructs the scene a saved trajectory hashes.
    """

    label: str | None = None
    kind: str = "grasp-rotate"
    object: str = "spam"
    seed: int = 0
    ticks: int = Field(default=600, ge=1)
    zero_noise: bool = False
    path: str | None = None
    jsonl: str | None = None

    def resolved_label(self) -> str:
        if self.label:
            return self.label
        return f"{self.object}-{self.kind}"


class TrackRequest(BaseModel):
    trajectory: TrajectorySpec
    variant: VariantModel = VariantModel()
    seed: int = 0
    include_series: bool = False
    jobs: int = Field(default=1, ge=1)


class TrackResponse(BaseModel):
    trajectory: str
    variant: str
    seed: int
    num_ticks: int
    mean_add: float
    std_add: float
    max_add: float
    final_add: float
    diverged: int
    series: list[float] | None = None


class ExperimentConfigModel(BaseModel):
    trajectories: list[TrajectorySpec]
    variants: list[VariantModel]
    seeds: list[int]
    out: str | None = None
    jobs: int = Field(default=1, ge=1)


class SummaryRowModel(BaseModel):
    trajectory: str
    variant: str
    runs: int
    mean_add: float
    std_between_seeds: float
    mean_within_std: float
    max_add: float
    mean_final_add: float


class ExperimentResponse(BaseModel):
    rows: list[SummaryRowModel]
    files: list[str]
    num_runs: int


class AblateRequest(BaseModel):
    config: ExperimentConfigModel
    axis: str


class AblateResponse(BaseModel):
    configs: list[ExperimentConfigModel]


class ReportRequest(BaseModel):
    out: str


class ReportResponse(BaseModel):
    rows: list[SummaryRowModel]


class CreateSessionRequest(BaseModel):
    object: str = "spam"
    scene_path: str | None = None
    variant: VariantModel = VariantModel()
    seed: int = 0
    initial_state: StateModel | None = None
    initial_pose_estimate: PoseModel | None = None


class CreateSessionResponse(BaseModel):
    session_id: str
    num_lanes: int
    scene_hash: str


class TickRequest(BaseModel):
    control: list[float]
    observation: ObservationModel


class TickResponse(BaseModel):
    tick: int
    best_lane: int
    pose: PoseModel
    updated: bool
    eta_star: float | None = None
    diverged: int


class EstimateResponse(BaseModel):
    tick: int
    pose: PoseModel


class HealthResponse(BaseModel):
    status: str
    version: str
