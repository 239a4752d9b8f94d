//! Library side of the command line front end: scenario files, figure
//! emission, and the error-to-exit-code mapping.

pub mod figures;
pub mod scenario;

use thiserror::Error;

use persuasion::adaptive::AdaptiveError;
use persuasion::commitment::CommitmentError;
use persuasion::linprog::LinprogError;
use persuasion::messaging::MessagingError;
use persuasion::model::ModelError;
use persuasion::nonadaptive::NonAdaptiveError;
use persuasion::oracle::OracleError;

use scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    BadArgument(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Messaging(#[from] MessagingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Adaptive(#[from] AdaptiveError),
    #[error(transparent)]
    NonAdaptive(#[from] NonAdaptiveError),
    #[error(transparent)]
    Commitment(#[from] CommitmentError),
}

fn linprog_code(e: &LinprogError) -> i32 {
    match e {
        LinprogError::NumericalFailure(_) => 3,
        LinprogError::BadInput(_) => 2,
    }
}

fn messaging_code(e: &MessagingError) -> i32 {
    match e {
        MessagingError::SizeCapExceeded { .. } => 4,
        MessagingError::Linprog(l) => linprog_code(l),
        MessagingError::UnexpectedOutcome(_) => 3,
        MessagingError::Model(_) | MessagingError::NotInterval => 2,
    }
}

fn oracle_code(e: &OracleError) -> i32 {
    match e {
        OracleError::CapExceeded { .. } | OracleError::ExplosionGuard { .. } => 4,
        OracleError::Linprog(l) => linprog_code(l),
        _ => 2,
    }
}

impl CliError {
    /// Exit code contract: 0 success, 2 validation, 3 numerical failure,
    /// 4 cap exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) | CliError::BadArgument(_) | CliError::Io { .. } => 2,
            CliError::Model(_) => 2,
            CliError::Messaging(e) => messaging_code(e),
            CliError::Oracle(e) => oracle_code(e),
            CliError::Adaptive(e) => match e {
                AdaptiveError::CapExceeded(..) => 4,
                AdaptiveError::Messaging(m) => messaging_code(m),
                AdaptiveError::Oracle(o) => oracle_code(o),
                AdaptiveError::MalformedPlan(_) | AdaptiveError::BadCosts => 2,
            },
            CliError::NonAdaptive(e) => match e {
                NonAdaptiveError::CapExceeded { .. } => 4,
                NonAdaptiveError::Messaging(m) => messaging_code(m),
                NonAdaptiveError::Oracle(o) => oracle_code(o),
                NonAdaptiveError::Model(_)
                | NonAdaptiveError::BadCosts
                | NonAdaptiveError::ParameterViolation(_) => 2,
            },
            CliError::Commitment(e) => match e {
                CommitmentError::Numerical(_) => 3,
                CommitmentError::Messaging(m) => messaging_code(m),
                CommitmentError::Oracle(o) => oracle_code(o),
                _ => 2,
            },
        }
    }
}

/// Formats a value rounded to nine significant digits, printed in the
/// shortest form that round-trips the rounded number.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("rounded float parses");
    rounded.to_string()
}
