use thiserror::Error;

/// Errors surfaced while ingesting data, fitting estimators, or evaluating models.
#[derive(Debug, Error)]
pub enum SurvError {
    #[error("row {row}: {reason}")]
    Ingestion { row: usize, reason: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cohort must contain both treatment arms")]
    SingleArm,
    #[error("treatment arm {arm} has no rows in {context}")]
    EmptyArm { arm: u8, context: String },
    #[error("subset must contain at least {required} events, found {found}")]
    TooFewEvents { required: usize, found: usize },
    #[error("optimizer did not converge after {iterations} iterations (|grad| = {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("learner {learner} requires nuisance component {component}")]
    MissingNuisance { learner: String, component: String },
    #[error("complete-case view is empty at t* = {t_star}")]
    EmptyCompleteCase { t_star: f64 },
    #[error("all regression weights are zero")]
    AllWeightsZero,
    #[error("covariate vector does not conform to schema: {0}")]
    SchemaMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cross-validation fold {fold} lacks {what} after stratified resampling")]
    DegenerateFold { fold: usize, what: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl SurvError {
    /// Coarse classification used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        use SurvError::*;
        match self {
            Ingestion { .. } | Schema(_) | SchemaMismatch(_) | Io(_) | Serde(_) => ErrorClass::Data,
            NonConvergence { .. } | Numerical(_) | AllWeightsZero => ErrorClass::Numerical,
            _ => ErrorClass::Config,
        }
    }
}

/// Error classes mapped to distinct process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}
