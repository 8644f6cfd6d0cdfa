"""beaconlab: a deterministic beacon-deployment simulator and security toolkit.

Model a BLE-style beacon deployment, run attacks against it, measure what the
defences buy, and generate analyst-facing threat assessments.
"""

from .actors import AppSpec, PersonalTag, UserDevice, app_on_near, proximity_decision
from .attacks import (
    ATTACK_KINDS,
    AttackerObservation,
    AttackerReceiver,
    AttackProfile,
    HarvestedDb,
    HarvestEntry,
    InjectedEmitter,
    LUNCH_TIME,
    PERVASIVE,
    apply_attack,
    attack_metrics,
    delivery_correctness,
    drain_id,
    harvest,
    install_pending,
    normalize_kind,
    required_capabilities,
)
from .ephemeral import (
    BloomFilter,
    EphemeralParams,
    bloom_contains,
    bloom_empty,
    bloom_insert,
    bloom_size_for,
    build_filter,
    ephemeral_id,
    expected_fp_rate,
    read_filter_file,
    verify_and_resolve,
    write_filter_file,
)
from .errors import (
    BeaconLabError,
    CapabilityError,
    ContaminatedCalibration,
    InsufficientData,
    InvalidInput,
    SchemaError,
    TooShort,
    UnknownRef,
    ValidationError,
)
from .guardian import GuardianConfig, apply_guardian, jam_succeeds
from .model import (
    BeaconConfig,
    BeaconId,
    ContentRef,
    DeploymentMap,
    EphemeralId,
    Observation,
    StaticId,
    Trace,
    adjacency_from_positions,
    load_deployment,
    resolve_content,
)
from .outlier import (
    DetectorParams,
    MarkovModel,
    Verdict,
    build_markov,
    calibrate_threshold,
    detect,
    score_trace,
    static_state_resolver,
    trace_transitions,
)
from .radio import Event, EventLog, RadioParams, estimate_distance, mean_rssi, rssi_at
from .scenario import Scenario, load_scenario, load_scenario_file
from .sim import BudgetRecord, RunResult, WindowRecord, run
from .storage import (
    metric_rows,
    read_events_jsonl,
    read_metrics_csv,
    read_traces_jsonl,
    write_detect_csv,
    write_events_jsonl,
    write_metrics_csv,
    write_traces_jsonl,
)
from .threatmatrix import (
    AssessmentReport,
    ThreatMatrix,
    assess,
    attacks_for_capabilities,
    attacks_for_motives,
    default_matrix,
    impact_report,
    likely_attacks,
    load_matrix,
    recommend_defences,
    skill_profile,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACK_KINDS",
    "AppSpec",
    "AssessmentReport",
    "AttackProfile",
    "AttackerObservation",
    "AttackerReceiver",
    "BeaconConfig",
    "BeaconId",
    "BeaconLabError",
    "BloomFilter",
    "BudgetRecord",
    "CapabilityError",
    "ContaminatedCalibration",
    "ContentRef",
    "DeploymentMap",
    "DetectorParams",
    "EphemeralId",
    "EphemeralParams",
    "Event",
    "EventLog",
    "GuardianConfig",
    "HarvestEntry",
    "HarvestedDb",
    "InjectedEmitter",
    "InsufficientData",
    "InvalidInput",
    "LUNCH_TIME",
    "MarkovModel",
    "Observation",
    "PERVASIVE",
    "PersonalTag",
    "RadioParams",
    "RunResult",
    "Scenario",
    "SchemaError",
    "StaticId",
    "ThreatMatrix",
    "TooShort",
    "Trace",
    "UnknownRef",
    "UserDevice",
    "ValidationError",
    "Verdict",
    "WindowRecord",
    "adjacency_from_positions",
    "app_on_near",
    "apply_attack",
    "apply_guardian",
    "assess",
    "attack_metrics",
    "attacks_for_capabilities",
    "attacks_for_motives",
    "bloom_contains",
    "bloom_empty",
    "bloom_insert",
    "bloom_size_for",
    "build_filter",
    "build_markov",
    "calibrate_threshold",
    "default_matrix",
    "delivery_correctness",
    "detect",
    "drain_id",
    "ephemeral_id",
    "estimate_distance",
    "expected_fp_rate",
    "harvest",
    "impact_report",
    "install_pending",
    "jam_succeeds",
    "likely_attacks",
    "load_deployment",
    "load_matrix",
    "load_scenario",
    "load_scenario_file",
    "mean_rssi",
    "metric_rows",
    "normalize_kind",
    "proximity_decision",
    "read_events_jsonl",
    "read_filter_file",
    "read_metrics_csv",
    "read_traces_jsonl",
    "recommend_defences",
    "required_capabilities",
    "resolve_content",
    "rssi_at",
    "run",
    "score_trace",
    "skill_profile",
    "static_state_resolver",
    "trace_transitions",
    "verify_and_resolve",
    "write_detect_csv",
    "write_events_jsonl",
    "write_filter_file",
    "write_metrics_csv",
    "write_traces_jsonl",
]
