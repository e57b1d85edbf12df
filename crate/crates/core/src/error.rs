use std::path::PathBuf;

use thiserror::Error;

use crate::model::{EventKind, PopulationState, Variant};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error(
        "population must be supercritical (lambda > mu), got lambda = {lambda}, mu = {mu}; \
         the model assumes a growing population"
    )]
    NotSupercritical { lambda: f64, mu: f64 },

    #[error("invalid configuration `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("event {event:?} would drive a count negative in state {state:?}")]
    Underflow {
        event: EventKind,
        state: PopulationState,
    },

    #[error("event {event:?} is not defined for the {variant:?} model")]
    IllegalEvent { event: EventKind, variant: Variant },

    #[error("count overflow applying {event:?}")]
    Overflow { event: EventKind },

    #[error("no sign change found while bracketing the Euler-Lotka root (upper bracket reached {upper})")]
    BracketFailure { upper: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "growth window [{start}, {end}] contains an extinction or lies past the end of the run"
    )]
    WindowContainsExtinction { start: f64, end: f64 },

    #[error("only {survivors} surviving replicates, at least {required} required")]
    InsufficientSurvivors { survivors: usize, required: usize },

    #[error(
        "reaching t = {t_end} needs about {expected_events:.3e} events per replicate, \
         above the event budget of {budget}"
    )]
    BudgetExceeded {
        t_end: f64,
        expected_events: f64,
        budget: u64,
    },

    #[error("sample grids do not match: {0}")]
    GridMismatch(String),

    #[error("step size too coarse: halving dt moved the terminal state by {deviation:.3e}")]
    StepSizeTooCoarse { deviation: f64 },

    #[error("population went extinct in {attempts} consecutive attempts")]
    RetriesExhausted { attempts: u32 },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn params(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParams { .. }
            | Error::NotSupercritical { .. }
            | Error::InvalidConfig { .. }
            | Error::Precondition(_)
            | Error::Json { .. } => true,
            Error::Replicate { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
