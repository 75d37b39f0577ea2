"""Censored Weibull time-to-visit modeling and notification send policies."""

from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DomainError,
    NumericalError,
    SchemaError,
    SendwhenError,
)
from .evaluation import (
    DEFAULT_HORIZONS,
    LABELERS,
    AucReport,
    AucRow,
    auc,
    auc_vs_horizon,
    fit_logistic_baselines,
    label_censoring_clean,
    label_naive,
)
from .features import FeatureSchema, SlotSpec
from .io import (
    dump_json,
    file_sha256,
    load_json_config,
    read_events,
    read_events_csv,
    read_events_jsonl,
    read_model_json,
    read_observations_jsonl,
    read_schema_json,
    write_events_jsonl,
    write_model_json,
    write_observations_jsonl,
    write_schema_json,
)
from .optimize import OptConfig, OptResult, minimize_smooth
from .pipeline import (
    Event,
    Observation,
    OutlierReport,
    PipelineConfig,
    SendInstance,
    SplitDataset,
    build_observations,
    build_send_instances,
    filter_outliers,
    split,
)
from .policies import (
    Candidate,
    Decision,
    MooConfig,
    PolicyResult,
    moo_solve,
    ratio_rule,
    threshold_rule,
)
from .scoring import (
    DeltaEffectResult,
    ScoringContext,
    model_digest,
    score_batch,
    score_delta_effect,
    transition_features,
)
from .simulate import (
    SendProcess,
    SimConfig,
    default_sim_schema,
    generate_event_log,
    sample_time_to_visit,
)
from .survival import (
    StatePair,
    WeibullParams,
    delta_effect,
    prob_visit_if_not_send,
    prob_visit_if_send,
    weibull_cdf,
    weibull_pdf,
    weibull_sf,
)
from .training import (
    LogisticModel,
    WeibullAftModel,
    fit_aft,
    fit_logistic,
)

__version__ = "0.1.0"

__all__ = [
    "AucReport",
    "AucRow",
    "Candidate",
    "ConfigError",
    "ConvergenceError",
    "DEFAULT_HORIZONS",
    "DataError",
    "Decision",
    "DeltaEffectResult",
    "DomainError",
    "Event",
    "FeatureSchema",
    "LABELERS",
    "LogisticModel",
    "MooConfig",
    "NumericalError",
    "Observation",
    "OptConfig",
    "OptResult",
    "OutlierReport",
    "PipelineConfig",
    "PolicyResult",
    "SchemaError",
    "ScoringContext",
    "SendInstance",
    "SendProcess",
    "SendwhenError",
    "SimConfig",
    "SlotSpec",
    "SplitDataset",
    "StatePair",
    "WeibullAftModel",
    "WeibullParams",
    "auc",
    "auc_vs_horizon",
    "build_observations",
    "build_send_instances",
    "default_sim_schema",
    "delta_effect",
    "dump_json",
    "file_sha256",
    "filter_outliers",
    "fit_aft",
    "fit_logistic",
    "fit_logistic_baselines",
    "generate_event_log",
    "label_censoring_clean",
    "label_naive",
    "load_json_config",
    "minimize_smooth",
    "model_digest",
    "moo_solve",
    "prob_visit_if_not_send",
    "prob_visit_if_send",
    "ratio_rule",
    "read_events",
    "read_events_csv",
    "read_events_jsonl",
    "read_model_json",
    "read_observations_jsonl",
    "read_schema_json",
    "sample_time_to_visit",
    "score_batch",
    "score_delta_effect",
    "split",
    "threshold_rule",
    "transition_features",
    "weibull_cdf",
    "weibull_pdf",
    "weibull_sf",
    "write_events_jsonl",
    "write_model_json",
    "write_observations_jsonl",
    "write_schema_json",
    "__version__",
]
