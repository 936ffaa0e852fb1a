//! Online conformal prediction with localization and bandwidth aggregation.
//!
//! The crate builds prediction intervals for streaming regression one step
//! at a time. The base tools are weighted empirical score quantiles
//! ([`scores`]), kernel localization over a rolling calibration window
//! ([`localization`]), and an online level update that trades coverage debt
//! against interval size ([`methods`]). On top of those sit a pool of
//! localized predictors at different bandwidths combined by an AdaHedge
//! learner with a queue-based size penalty ([`hedge`]), a diagnostic for
//! whether any fixed expert mixture could have met the coverage target
//! ([`feasibility`]), synthetic autoregressive benchmarks ([`experiments`]),
//! and CSV stream ingestion ([`stream`]).

pub use rand_chacha;

pub mod error;
pub mod experiments;
pub mod feasibility;
pub mod hedge;
pub mod localization;
pub mod methods;
pub mod scores;
pub mod stream;

pub use error::{OlcpError, Result};
pub use experiments::{
    block_bootstrap_se, build_method, generate_scenario, ols_fit, rolling_metric, run_experiment,
    ExperimentSummary, MethodConfig, MethodKind, MethodSummary, RepTrace, Scenario,
    ScenarioConfig, DEFAULT_BANDWIDTH_MULTIPLIERS,
};
pub use feasibility::{feasibility_diagnostic, FeasibilityReport};
pub use hedge::{hedge_parameters, AdaHedge, HedgeParams, OlcpHedge};
pub use localization::{silverman_bandwidth, CalibrationWindow, Localizer};
pub use methods::{
    default_gamma, Aci, BoundaryLedger, DtAci, Lcp, Olcp, OnlineConformal, PredictionInterval,
    SplitCp, StepRecord,
};
pub use scores::{
    corrected_rank, pinball_loss, split_conformal_radius, WeightedScoreDistribution,
};
pub use stream::{ingest_stream, ColumnSpec, StreamRecord};
