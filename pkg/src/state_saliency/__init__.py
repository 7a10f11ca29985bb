"""Integrated-gradients saliency of feedback states for state-action policies,
plus locomotion task-performance metrics."""

from .errors import ComputationError, FormatError, SaliencyError
from .features import (
    StateSchema,
    Trajectory,
    default_schema,
    gait_schema,
    load_schema,
    phase,
    phase_vector,
    read_trajectory,
    sigmoid_contact,
    validate_schema,
)
from .mlp import LayerSpec, MlpPolicy, forward, input_jacobian, load_policy, save_policy
from .saliency import (
    IgConfig,
    ImportanceReport,
    SaliencyMap,
    compose_sensitivity,
    dimension_importance,
    feedforward_share,
    group_importance,
    importance_report,
    integrated_gradients,
    relative_importance,
    saliency_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "ComputationError",
    "FormatError",
    "IgConfig",
    "ImportanceReport",
    "LayerSpec",
    "MlpPolicy",
    "SaliencyError",
    "SaliencyMap",
    "StateSchema",
    "Trajectory",
    "compose_sensitivity",
    "default_schema",
    "dimension_importance",
    "feedforward_share",
    "forward",
    "gait_schema",
    "group_importance",
    "importance_report",
    "input_jacobian",
    "integrated_gradients",
    "load_policy",
    "load_schema",
    "phase",
    "phase_vector",
    "read_trajectory",
    "relative_importance",
    "saliency_pipeline",
    "save_policy",
    "sigmoid_contact",
    "validate_schema",
]
