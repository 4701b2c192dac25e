//! End-to-end evaluation, from configuration to reports.

mod config;
mod extractor;
mod replay;
mod report;
mod run;
mod scenario;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::codecs::CodecError;
use crate::data::DataError;
use crate::detector::DetectorError;
use crate::metrics::MetricError;
use crate::model::ModelError;
use crate::pq::PqError;

pub use self::config::{
    CodecConfig, DataConfig, DataSource, DetectorConfig, PqConfig, RunConfig,
    DEFAULT_EDGE_MODEL_PARAMS,
};
pub use self::extractor::{extract_server_features, CELL};
pub use self::replay::{
    replay_reference_tables, ReferenceRow, ReferenceTimings, REFERENCE_TIMINGS_TOML,
};
pub use self::report::{image_scores_csv, tradeoff_csv, write_suite_reports};
pub use self::run::{
    edge_payload, load_run_dataset, run_scenario, run_scenario_on, run_suite, run_suite_on, CodebookCache,
    ImageRecord, ScenarioResult, ScenarioStatus, SuiteReport, TradeoffPoint,
};
pub use self::scenario::{CodecChoice, EdgeStage, FeatureSource, Scenario, BUILTIN_SCENARIOS};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("sample {sample}: no {what} available")]
    MissingInput { sample: String, what: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Pq(#[from] PqError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}
