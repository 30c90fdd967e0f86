//! End-to-end orchestration: configuration, Monte Carlo comparison, validation and the pipeline.

pub mod config;
pub mod experiment;
pub mod montecarlo;
pub mod pipeline;
pub mod resampling;

use std::fmt;

use thiserror::Error;

pub use config::HarnessConfig;

/// Pipeline stage, used to label errors and pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Simulate,
    Summaries,
    Optimize,
    Schedule,
    Plan,
    MonteCarlo,
    Estimate,
    Validate,
    Io,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Simulate => 3,
            Stage::Summaries => 4,
            Stage::Optimize => 5,
            Stage::Schedule => 6,
            Stage::Plan => 7,
            Stage::MonteCarlo => 8,
            Stage::Estimate => 9,
            Stage::Validate => 10,
            Stage::Io => 11,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Simulate => "simulate",
            Stage::Summaries => "summaries",
            Stage::Optimize => "optimize",
            Stage::Schedule => "schedule",
            Stage::Plan => "plan",
            Stage::MonteCarlo => "montecarlo",
            Stage::Estimate => "estimate",
            Stage::Validate => "validate",
            Stage::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct HarnessError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl HarnessError {
    pub fn new(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self { stage, source: source.into() }
    }
}

/// Closure labelling an error with its stage, for `map_err`.
pub fn at<E: Into<Box<dyn std::error::Error + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> HarnessError {
    move |e| HarnessError::new(stage, e)
}
