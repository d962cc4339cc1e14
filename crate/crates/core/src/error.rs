use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its invariant.
    #[error("invalid config: {field}{}: {reason}", region_suffix(*.region))]
    InvalidConfig {
        field: String,
        region: Option<usize>,
        reason: String,
    },

    /// A cell in the region table could not be accepted.
    #[error("region table row {row}, column `{column}`: {reason}")]
    RegionTable { row: usize, column: String, reason: String },

    /// NaN or infinity produced mid-episode.
    #[error("non-finite `{field}` at step {step}{}", region_suffix(*.region))]
    NonFinite {
        step: usize,
        region: Option<usize>,
        field: &'static str,
    },

    #[error("incomplete episode log: expected {expected_steps} steps x {expected_regions} regions, found {found}")]
    IncompleteLog {
        expected_steps: usize,
        expected_regions: usize,
        found: String,
    },

    #[error("malformed observation: {0}")]
    MalformedObservation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode already finished at step {0}")]
    EpisodeFinished(usize),

    #[error("refusing to write an empty result")]
    EmptyResult,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
}

fn region_suffix(region: Option<usize>) -> String {
    match region {
        Some(r) => format!(" (region {r})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, region: Option<usize>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            region,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than by a run going wrong.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. }
                | Error::RegionTable { .. }
                | Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::MalformedObservation(_)
        )
    }
}
