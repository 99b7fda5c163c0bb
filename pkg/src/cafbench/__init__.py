"""Context-aided forecast evaluation toolkit.

A scoring rule for probabilistic forecasts that rewards use of contextual
information (region-weighted CRPS with constraint penalties and calibrated
scale), procedural benchmark task generators, baseline and LLM-backed
forecasters, and a statistically weighted evaluation harness with a CLI.
"""

from .baselines import (
    ExpSmoothingState,
    context_oracle,
    exp_smoothing_fit,
    exp_smoothing_sample,
    seasonal_naive,
)
from .harness import (
    AggregateReport,
    ContextOracleForecaster,
    DirectPromptForecaster,
    EvalRecord,
    ExpSmoothingForecaster,
    LlmpForecaster,
    SeasonalNaiveForecaster,
    aggregate,
    paired_t_test,
    persist_and_report,
    rank_simulation,
    run_evaluation,
)
from .llm import (
    CompletionEndpoint,
    ForecastError,
    HttpEndpoint,
    MockEndpoint,
    ParseRejection,
    RetryPolicy,
    direct_prompt_forecast,
    direct_prompt_parse,
    direct_prompt_render,
    llmp_forecast,
    llmp_parse_value,
    llmp_render,
)
from .scoring import (
    ConstraintSpec,
    ForecastEnsemble,
    ScoreRecord,
    ScoringConfig,
    calibrate_alpha,
    constraint_violation,
    crps_covariance,
    crps_energy,
    crps_pwm,
    rcrps,
    rcrps_variance,
    tw_crps_constraint,
)
from .tasks import (
    BaseSeriesConfig,
    BoundedParams,
    GeneratorKind,
    InstancePlan,
    OutageParams,
    SpikeParams,
    SvarParams,
    TaskDescriptor,
    bounded_generate,
    default_registry,
    generate_instance,
    instance_filename,
    outage_generate,
    registry_index,
    spike_generate,
    svar_generate,
    task_weights,
)
from .timeseries import (
    ContextBlocks,
    Frequency,
    TaskInstance,
    TimeSeriesWindow,
    add_gaussian_noise,
    affine_transform,
    load_csv,
    shift_dates,
    split_window,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "ContextOracleForecaster",
    "DirectPromptForecaster",
    "EvalRecord",
    "ExpSmoothingForecaster",
    "LlmpForecaster",
    "SeasonalNaiveForecaster",
    "aggregate",
    "paired_t_test",
    "persist_and_report",
    "rank_simulation",
    "run_evaluation",
    "ExpSmoothingState",
    "context_oracle",
    "exp_smoothing_fit",
    "exp_smoothing_sample",
    "seasonal_naive",
    "CompletionEndpoint",
    "ForecastError",
    "HttpEndpoint",
    "MockEndpoint",
    "ParseRejection",
    "RetryPolicy",
    "direct_prompt_forecast",
    "direct_prompt_parse",
    "direct_prompt_render",
    "llmp_forecast",
    "llmp_parse_value",
    "llmp_render",
    "ConstraintSpec",
    "ForecastEnsemble",
    "ScoreRecord",
    "ScoringConfig",
    "calibrate_alpha",
    "constraint_violation",
    "crps_covariance",
    "crps_energy",
    "crps_pwm",
    "rcrps",
    "rcrps_variance",
    "tw_crps_constraint",
    "BaseSeriesConfig",
    "BoundedParams",
    "GeneratorKind",
    "InstancePlan",
    "OutageParams",
    "SpikeParams",
    "SvarParams",
    "TaskDescriptor",
    "bounded_generate",
    "default_registry",
    "generate_instance",
    "instance_filename",
    "outage_generate",
    "registry_index",
    "spike_generate",
    "svar_generate",
    "task_weights",
    "ContextBlocks",
    "Frequency",
    "TaskInstance",
    "TimeSeriesWindow",
    "add_gaussian_noise",
    "affine_transform",
    "load_csv",
    "shift_dates",
    "split_window",
    "__version__",
]
