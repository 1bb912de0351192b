# toimit/schemas.py - pydantic documents for robot models, tasks, configs and reports
import datetime
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


Vec2 = Tuple[float, float]


# ============================================
# ROBOT MODEL DOCUMENT
# ============================================


class BodySpec(BaseModel):
    name: str = Field(min_length=1, max_length=50)
    mass: float = Field(gt=0, description="kg")
    com: Vec2 = (0.0, 0.0)
    inertia: float = Field(gt=0, description="rotational inertia about the COM, kg m^2")

    @field_validator("name", mode="before")
    @classmethod
    def strip_name(cls, v: str) -> str:
        if not v or not str(v).strip():
            raise ValueError("Body name cannot be empty")
        return str(v).strip()


class JointSpec(BaseModel):
    name: str = Field(min_length=1, max_length=50)
    type: Literal["floating-planar", "revolute", "prismatic"]
    parent: Optional[str] = None  # None attaches to the world
    child: str
    offset: Vec2 = (0.0, 0.0)
    axis: Vec2 = (1.0, 0.0)
    lower: Optional[float] = None
    upper: Optional[float] = None
    torque_limit: Optional[float] = None
    default: float = 0.0

    @model_validator(mode="after")
    def check_limits(self):
        if self.type == "floating-planar":
            if self.parent is not None:
                raise ValueError(f"Floating joint '{self.name}' must attach to the world")
            return self

        if self.lower is None or self.upper is None:
            raise ValueError(f"Joint '{self.name}' needs lower and upper limits")
        if not self.lower < self.upper:
            raise ValueError(f"Joint '{self.name}': lower limit {self.lower} must be below upper {self.upper}")
        if self.torque_limit is None or self.torque_limit <= 0:
            raise ValueError(f"Joint '{self.name}': torque_limit must be > 0")
        if self.type == "prismatic":
            norm = (self.axis[0] ** 2 + self.axis[1] ** 2) ** 0.5
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"Prismatic joint '{self.name}' axis must be a unit vector")
        return self


class SiteSpec(BaseModel):
    name: str = Field(min_length=1, max_length=50)
    body: str
    offset: Vec2 = (0.0, 0.0)


class RobotModelDoc(BaseModel):
    """Structured description of a planar kinematic tree (the model file schema)."""
    name: str
    gravity: float = Field(default=9.81, ge=0)
    bodies: List[BodySpec]
    joints: List[JointSpec]
    sites: List[SiteSpec] = Field(default_factory=list)
    nominal_base: Optional[Tuple[float, float, float]] = None

    @model_validator(mode="after")
    def check_tree(self):
        body_names = [b.name for b in self.bodies]
        if len(set(body_names)) != len(body_names):
            raise ValueError("Body names must be unique")

        joint_names = [j.name for j in self.joints]
        if len(set(joint_names)) != len(joint_names):
            raise ValueError("Joint names must be unique")

        children = [j.child for j in self.joints]
        for name in body_names:
            if children.count(name) != 1:
                raise ValueError(f"Body '{name}' must be the child of exactly one joint")
        for joint in self.joints:
            if joint.child not in body_names:
                raise ValueError(f"Joint '{joint.name}' names unknown child '{joint.child}'")
            if joint.parent is not None and joint.parent not in body_names:
                raise ValueError(f"Joint '{joint.name}' names unknown parent '{joint.parent}'")

        floating = [j for j in self.joints if j.type == "floating-planar"]
        if len(floating) > 1:
            raise ValueError("At most one floating base joint is allowed")

        # Acyclic: every body must reach the world by following parents
        parent_of = {j.child: j.parent for j in self.joints}
        for name in body_names:
            seen = set()
            cursor = name
            while cursor is not None:
                if cursor in seen:
                    raise ValueError(f"Kinematic loop through body '{name}'")
                seen.add(cursor)
                cursor = parent_of[cursor]

        site_names = [s.name for s in self.sites]
        if len(set(site_names)) != len(site_names):
            raise ValueError("Site names must be unique")
        for site in self.sites:
            if site.body not in body_names:
                raise ValueError(f"Site '{site.name}' references unknown body '{site.body}'")
        return self


# ============================================
# TASKS
# ============================================


TaskName = Literal["walk", "stair", "press", "pickup-analog"]


class TaskParameters(BaseModel):
    speed: float = Field(default=0.0, ge=0.0, le=1.5, description="m/s")
    step_height: float = Field(default=0.15, ge=0.10, le=0.20, description="m")
    step_length: Optional[float] = Field(default=None, ge=0.0, le=0.6, description="m")
    stair_riser: float = Field(default=0.0, ge=0.0, le=0.14, description="m")
    desk_height: float = Field(default=0.90, ge=0.85, le=0.95, description="m")
    normal_force: float = Field(default=0.0, ge=0.0, le=20.0, description="N")
    squat_depth: float = Field(default=0.10, ge=0.0, le=0.25, description="m")
    swing_duration: float = Field(default=0.30, gt=0.0)
    double_support_duration: float = Field(default=0.10, gt=0.0)
    approach_duration: float = Field(default=0.30, gt=0.0)
    press_duration: float = Field(default=0.60, gt=0.0)
    reach_offset: float = Field(default=0.0, ge=-0.1, le=0.1, description="m, hand contact x shift")
    n_steps: int = Field(default=2, ge=1, le=6)

    @field_validator("stair_riser")
    @classmethod
    def riser_range(cls, v: float) -> float:
        # zero means "no stairs"; otherwise the declared riser range applies
        if v != 0.0 and not 0.04 <= v <= 0.14:
            raise ValueError("stair_riser must be 0 or within [0.04, 0.14] m")
        return v


class TaskSpec(BaseModel):
    name: TaskName
    model_id: str
    horizon: float = Field(gt=0, description="s")
    dt: float = Field(gt=0, description="s")
    parameters: TaskParameters = Field(default_factory=TaskParameters)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_timing(self):
        for duration in self.phase_durations():
            ratio = duration / self.dt
            if abs(ratio - round(ratio)) > 1e-6:
                raise ValueError(f"dt={self.dt} does not divide phase duration {duration}")
        total = sum(self.phase_durations())
        if abs(total - self.horizon) > 1e-9:
            raise ValueError(f"Phase durations sum to {total}, horizon is {self.horizon}")
        return self

    def phase_durations(self) -> List[float]:
        p = self.parameters
        if self.name in ("walk", "stair"):
            return [p.double_support_duration] + [p.swing_duration, p.double_support_duration] * p.n_steps
        if self.name == "press":
            return [p.approach_duration, p.press_duration]
        return [self.horizon]


class ParameterRange(BaseModel):
    low: float
    high: float

    @model_validator(mode="after")
    def ordered(self):
        if self.high < self.low:
            raise ValueError(f"Range high {self.high} is below low {self.low}")
        return self


class TaskRanges(BaseModel):
    """Sampling ranges per task, loaded from tasks/ranges.yaml."""
    model_id: str
    dt: float = Field(gt=0)
    fixed: Dict[str, float] = Field(default_factory=dict)
    ranges: Dict[str, ParameterRange] = Field(default_factory=dict)


class TaskLibraryDoc(BaseModel):
    tasks: Dict[str, TaskRanges]


# ============================================
# SOLVER OPTIONS
# ============================================


class SolverOptions(BaseModel):
    tol: float = Field(default=1e-9, gt=0, description="relative cost improvement")
    max_iters: int = Field(default=200, ge=0)
    fd_step: float = Field(default=1e-6, gt=0)
    reg_init: float = Field(default=1e-6, gt=0)
    reg_min: float = Field(default=1e-9, gt=0)
    reg_max: float = Field(default=1e6, gt=0)
    reg_increase: float = Field(default=10.0, gt=1)
    reg_decrease: float = Field(default=2.0, gt=1)
    line_search: List[float] = Field(default_factory=lambda: [0.5 ** i for i in range(11)])

    @field_validator("line_search")
    @classmethod
    def steps_in_unit_interval(cls, v: List[float]) -> List[float]:
        if not v or any(not 0 < a <= 1 for a in v):
            raise ValueError("line_search steps must lie in (0, 1]")
        return v


class CostWeights(BaseModel):
    """Default weights used when building cost stacks from tasks."""
    site_tracking: float = Field(default=1e3, ge=0)
    base_tracking: float = Field(default=1e2, ge=0)
    posture: float = Field(default=1.0, ge=0)
    control: float = Field(default=1e-2, gt=0)
    terminal_scale: float = Field(default=10.0, ge=0)
    force_tracking: float = Field(default=10.0, ge=0)
    torque_limit: float = Field(default=1e3, ge=0)
    joint_limit: float = Field(default=1e3, ge=0)
    joint_limit_margin: float = Field(default=0.05, ge=0)
    friction: float = Field(default=1e2, ge=0)
    mu: float = Field(default=0.7, gt=0, le=1.5)
    unilateral: float = Field(default=1e4, ge=0)
    normal_force_margin: float = Field(default=0.01, ge=0, description="N")


class SolveConfig(BaseModel):
    """One `toimit solve` run: which task, how it is discretized, and how it is weighted and solved."""
    model_config = ConfigDict(extra="forbid")

    task: Optional[TaskName] = None
    seed: Optional[int] = None
    dt: Optional[float] = Field(default=None, gt=0, description="s")
    horizon: Optional[float] = Field(default=None, gt=0, description="s, pickup-analog only")
    parameters: Dict[str, float] = Field(default_factory=dict)
    weights: CostWeights = Field(default_factory=CostWeights)
    solver: SolverOptions = Field(default_factory=SolverOptions)


# ============================================
# FEASIBILITY
# ============================================


class FeasibilityReport(BaseModel):
    max_joint_limit_violation: float = 0.0
    max_torque_limit_violation: float = 0.0
    max_friction_residual: float = 0.0
    min_normal_force: Optional[float] = None  # None when the trajectory has no contact
    max_dynamics_defect: float = 0.0
    max_impact_velocity: float = 0.0
    friction_gate: float = 0.0
    passed: bool = True
    reasons: List[str] = Field(default_factory=list)


# ============================================
# ENVIRONMENT
# ============================================


class RewardWeights(BaseModel):
    joint_pos: float = 0.30
    base_pos: float = 0.30
    base_ori: float = 0.30
    base_lin_vel: float = 0.30
    base_ang_vel: float = 0.30
    ee_pos: float = 0.30
    torque: float = 0.10
    contact_force: float = 0.10
    action_rate: float = -0.05
    torque_magnitude: float = -0.03
    joint_accel: float = -1e-6

    @model_validator(mode="after")
    def signs(self):
        for name in ("action_rate", "torque_magnitude", "joint_accel"):
            if getattr(self, name) > 0:
                raise ValueError(f"Penalty weight '{name}' must be <= 0")
        return self


class ObservationNoise(BaseModel):
    joint_pos: float = Field(default=0.0875, ge=0)
    joint_vel: float = Field(default=0.075, ge=0)
    base_lin_vel: float = Field(default=0.15, ge=0)
    base_ang_vel: float = Field(default=0.15, ge=0)
    gravity: float = Field(default=0.075, ge=0)


class RandomizationRanges(BaseModel):
    mass_scale: ParameterRange = ParameterRange(low=0.9, high=1.1)
    motor_strength: ParameterRange = ParameterRange(low=0.95, high=1.05)
    gain_scale: ParameterRange = ParameterRange(low=0.9, high=1.1)
    gravity_scale: ParameterRange = ParameterRange(low=0.9, high=1.1)
    friction: ParameterRange = ParameterRange(low=0.3, high=1.0)
    action_delay: ParameterRange = ParameterRange(low=0.0, high=0.02)
    terrains: List[Literal["flat", "rough"]] = Field(default_factory=lambda: ["flat", "rough"])
    noise: ObservationNoise = Field(default_factory=ObservationNoise)
    enabled: bool = True


class CurriculumConfig(BaseModel):
    noise_start: float = Field(default=0.1, ge=0)
    penalty_start: float = Field(default=0.5, ge=0)
    ramp_end: float = Field(default=0.5, gt=0, le=1)


class ContactParameters(BaseModel):
    normal_stiffness: float = Field(default=1e4, gt=0, description="N/m")
    normal_damping: float = Field(default=100.0, ge=0, description="N s/m")
    tangent_stiffness: float = Field(default=1e4, gt=0)
    tangent_damping: float = Field(default=100.0, ge=0)


class ReferenceChannels(BaseModel):
    force: bool = True
    torque: bool = True

    @property
    def variant(self) -> str:
        name = "Pos"
        if self.force:
            name += "+F"
        if self.torque:
            name += "+T"
        return name

    @classmethod
    def from_variant(cls, variant: str) -> "ReferenceChannels":
        table = {
            "Pos": (False, False),
            "Pos+F": (True, False),
            "Pos+T": (False, True),
            "Pos+F+T": (True, True),
        }
        if variant not in table:
            raise ValueError(f"Unknown variant '{variant}'. Expected one of {list(table)}")
        force, torque = table[variant]
        return cls(force=force, torque=torque)


class EnvConfig(BaseModel):
    policy_rate: int = Field(default=200, gt=0, description="Hz")
    inner_pd_rate: int = Field(default=1000, gt=0, description="Hz")
    history_len: int = Field(default=10, ge=0)
    history_stride: int = Field(default=4, ge=1)
    kp: float = Field(default=30.0, gt=0, description="N m / rad")
    kd: float = Field(default=1.0, ge=0, description="N m s / rad")
    action_bound: float = Field(default=1.0, gt=0, description="rad")
    reward_weights: RewardWeights = Field(default_factory=RewardWeights)
    dr_ranges: RandomizationRanges = Field(default_factory=RandomizationRanges)
    curriculum: CurriculumConfig = Field(default_factory=CurriculumConfig)
    contact: ContactParameters = Field(default_factory=ContactParameters)
    reference_channels: ReferenceChannels = Field(default_factory=ReferenceChannels)
    base_position_reward: Optional[bool] = None  # None: off for walking tasks, on otherwise
    min_height_fraction: float = Field(default=0.6, gt=0, lt=1)
    max_pitch: float = Field(default=0.8, gt=0)
    rough_amplitude: float = Field(default=0.02, ge=0)
    rough_spacing: float = Field(default=0.10, gt=0)

    @model_validator(mode="after")
    def rates_divide(self):
        if self.inner_pd_rate % self.policy_rate != 0:
            raise ValueError(
                f"inner_pd_rate ({self.inner_pd_rate}) must be divisible by policy_rate ({self.policy_rate})"
            )
        return self

    @property
    def substeps(self) -> int:
        return self.inner_pd_rate // self.policy_rate


# ============================================
# PPO / TRAINING
# ============================================


class PPOHyper(BaseModel):
    gamma: float = Field(default=0.99, gt=0, le=1)
    gae_lambda: float = Field(default=0.95, ge=0, le=1)
    learning_rate: float = Field(default=3e-4, gt=0)
    epochs: int = Field(default=4, ge=1)
    minibatch_size: int = Field(default=256, ge=1)
    clip: float = Field(default=0.2, gt=0)
    value_clip: float = Field(default=0.2, gt=0)
    value_coef: float = Field(default=0.5, ge=0)
    entropy_coef: float = Field(default=1e-3, ge=0)
    max_grad_norm: float = Field(default=1.0, gt=0)
    actor_hidden: List[int] = Field(default_factory=lambda: [256, 256])
    critic_hidden: List[int] = Field(default_factory=lambda: [256, 256])
    init_log_std: float = Field(default=-1.0, ge=-4, le=1)


class TrainConfig(BaseModel):
    dataset: str
    task: Optional[TaskName] = None
    iterations: int = Field(default=200, ge=1)
    num_envs: int = Field(default=4, ge=1)
    steps_per_env: int = Field(default=256, ge=1)
    checkpoint_every: int = Field(default=50, ge=1)
    seed: int = 0
    env: EnvConfig = Field(default_factory=EnvConfig)
    ppo: PPOHyper = Field(default_factory=PPOHyper)
    holdout_fraction: float = Field(default=0.1, ge=0, lt=1)


class AblationConfig(BaseModel):
    train: TrainConfig
    variants: List[str] = Field(default_factory=lambda: ["Pos", "Pos+F", "Pos+T", "Pos+F+T"])
    force_levels: List[float] = Field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    trajectories_per_level: int = Field(default=10, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    eval_seed: int = 1234
    checkpoints: Dict[str, str] = Field(default_factory=dict)

    @field_validator("variants")
    @classmethod
    def known_variants(cls, v: List[str]) -> List[str]:
        for name in v:
            ReferenceChannels.from_variant(name)
        return list(dict.fromkeys(v))


# ============================================
# REPORTS
# ============================================


class TrajectoryMetrics(BaseModel):
    """Tracking errors for one evaluated trajectory."""
    record_index: int
    e_joint: float
    e_vel_x: float
    e_vel_pitch: float
    e_ee_hand: float
    e_ee_foot: float
    e_pos_x: float
    e_pos_z: float
    e_pitch: float
    force_error: float
    steps: int
    terminated: bool


class MetricSummary(BaseModel):
    mean: float
    se: float
    sd: float


AXIS_MAPPING = {
    "E_vel_yaw": "E_vel_pitch (rad/s)",
    "E_pos_y": "E_pos_z (mm/step)",
    "E_yaw": "E_pitch (mrad/step)",
}


class TrackingReport(BaseModel):
    policy: str
    trials: int
    seed: int
    per_trajectory: List[TrajectoryMetrics]
    summary: Dict[str, MetricSummary]
    axis_mapping: Dict[str, str] = Field(default_factory=lambda: dict(AXIS_MAPPING))


class AblationCell(BaseModel):
    variant: str
    force_level: float
    force_error: MetricSummary
    hand_error: MetricSummary
    force_profiles: List[List[float]] = Field(default_factory=list)
    reference_profile: List[float] = Field(default_factory=list)


class AblationReport(BaseModel):
    variants: List[str]
    force_levels: List[float]
    cells: List[AblationCell]
    eval_seed: int

    def cell(self, variant: str, level: float) -> AblationCell:
        for c in self.cells:
            if c.variant == variant and abs(c.force_level - level) < 1e-9:
                return c
        raise KeyError(f"No cell for {variant} at {level} N")


class SuccessRateRow(BaseModel):
    setting: float
    unit: str
    trials: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials


class SuccessRateTable(BaseModel):
    scenario: Literal["step-height", "slope"]
    rows: List[SuccessRateRow]


# ============================================
# RUN MANIFEST
# ============================================


class RunManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: str
    config_paths: List[str] = Field(default_factory=list)
    seed: int = 0
    config_hash: str = ""
    output_dir: str
    arguments: Dict[str, str] = Field(default_factory=dict)
    started_at: datetime.datetime
    finished_at: Optional[datetime.datetime] = None
    exit_code: Optional[int] = None
