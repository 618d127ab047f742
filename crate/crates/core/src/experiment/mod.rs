//! End-to-end experiments: configuration, the staged shadow → target
//! pipeline, reports, and the oracle-backed verification suite.
//!
//! Every stage draws randomness from its own stream derived from the master
//! seed and a stage name, so reruns are bitwise identical and a change in one
//! stage's consumption leaves the others untouched:
//!
//! | stage | stream |
//! |---|---|
//! | split | `split` |
//! | shadow / target recommender | `rec:shadow`, `rec:target` |
//! | item embeddings | `generator` |
//! | defense sampling | `defense` |
//! | attack init / sampler noise | `attack:<method>`, `attack:<method>:noise` |

mod config;
mod run;
mod verify;

pub use config::{DatasetSource, ExperimentConfig, Setting, Side, SyntheticParams, DEFAULT_DATASET};
pub use run::{
    attack_inputs, attack_inputs_from_files, generate_vectors, load_dataset, prepare_data, run_attack, run_experiment,
    train_recommenders, AttackInputs, DataSummary, ExperimentOutcome, ExperimentReport, Method, MethodSummary,
    PhaseSummary, RecommenderSummary, Recorder, Recommenders, Timing,
};
pub use verify::{verify_suite, Check, Faults, VerifyReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("config key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    Input(String),
}

/// Wraps a module error with the stage it came from.
pub(crate) fn at<E: std::error::Error + Send + Sync + 'static>(stage: &'static str) -> impl FnOnce(E) -> ExperimentError {
    move |e| ExperimentError::Stage { stage, source: Box::new(e) }
}
