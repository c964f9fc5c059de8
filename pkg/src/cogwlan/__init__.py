"""Cognitive WLAN security manager: fingerprint-based admission control with
neural behavior-deviation detection, plus a simulated test bed, CLI and admin API."""

from .behavior import (
    BehaviorPattern,
    NodeActivity,
    NormalizationTable,
    OperationalMatrix,
    ServiceUsage,
    calibrate_om,
    default_normalization_table,
    encode_activity,
    generate_pattern,
    usage_summary,
)
from .config import ServerConfig, SystemConfig, load_config
from .csm import (
    AdminAction,
    AdminActionKind,
    AdminPolicy,
    AdmissionMode,
    EventOutcome,
    EventPath,
    NodeEvent,
    SecurityManager,
    read_audit_log,
    replay_records,
)
from .errors import (
    CogwlanError,
    ConfigError,
    ConflictError,
    NotFoundError,
    PersistenceError,
    StructuralError,
    TrainingError,
    ValidationError,
)
from .mlp import (
    LayerSpec,
    NetworkWeights,
    Sample,
    TrainingConfig,
    forward,
    gradient,
    init_weights,
    neuron_output,
    train_backprop,
)
from .policy import (
    Decision,
    DeviationReport,
    PolicyConfig,
    PolicyRuntime,
    conservative_om,
    deviation_score,
    evaluate,
    train_policy_net,
)
from .sim import (
    DeviationSpec,
    ProfileClass,
    SimConfig,
    SimMetrics,
    generate_trace,
    run_detection_experiment,
    sweep_input_neurons,
    sweep_lr_iterations,
)
from .store import NodeRecord, NodeStatus, NodeStore, PadlFingerprint, PatternHistory

__version__ = "0.1.0"
