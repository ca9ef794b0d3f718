"""Cyclic intersection signal control: simulation, rule-based controllers,
and a recurrent policy trained with clipped policy gradients plus cloning."""

__version__ = "0.1.0"

from .env import (
    ACTION_DELTAS,
    CyclicSignalEnv,
    Observation,
    RewardWeights,
    apply_action,
    compute_reward,
    mask_actions,
)
from .errors import (
    ActionMaskError,
    CheckpointError,
    ConfigError,
    CyclicSignalError,
    EpisodeFinished,
    FlowHistoryNotReady,
    InvalidPlanError,
    NonFiniteLossError,
    NumericsError,
    ProfileError,
    SaturationError,
)
from .sim import (
    Bounds,
    CycleStats,
    FlowProfile,
    IntersectionSim,
    Phase,
    PhasePlan,
    validate_plan,
)
from .teachers import (
    FixedTimeTeacher,
    LinearTeacher,
    LogisticTeacher,
    ScatsLikeTeacher,
    TeacherKind,
    WebsterTeacher,
    teacher_label,
)
from .policy import PolicyDims, PolicyNet
from .trainer import TrainConfig, train
from .evaluate import PolicyController, TeacherController, evaluate_controller
from .config import ScenarioConfig, load_config, save_config

__all__ = [
    "__version__",
    "ACTION_DELTAS",
    "ActionMaskError",
    "Bounds",
    "CheckpointError",
    "ConfigError",
    "CycleStats",
    "CyclicSignalEnv",
    "CyclicSignalError",
    "EpisodeFinished",
    "FixedTimeTeacher",
    "FlowHistoryNotReady",
    "FlowProfile",
    "IntersectionSim",
    "InvalidPlanError",
    "LinearTeacher",
    "LogisticTeacher",
    "NonFiniteLossError",
    "NumericsError",
    "Observation",
    "Phase",
    "PhasePlan",
    "PolicyController",
    "PolicyDims",
    "PolicyNet",
    "ProfileError",
    "RewardWeights",
    "SaturationError",
    "ScatsLikeTeacher",
    "ScenarioConfig",
    "TeacherController",
    "TeacherKind",
    "TrainConfig",
    "WebsterTeacher",
    "apply_action",
    "compute_reward",
    "evaluate_controller",
    "load_config",
    "mask_actions",
    "save_config",
    "teacher_label",
    "train",
    "validate_plan",
]
