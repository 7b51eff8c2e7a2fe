//! Study runtime: condition assignment, questionnaires, scale scoring and
//! the regression design matrix.

mod assign;
mod design;
mod questionnaire;
mod scales;
mod study;

pub use assign::{BlockAssigner, SharedAssigner};
pub use design::{build_design_matrix, dummy_label, DesignMatrix, DesignMatrixSpec, ScoredParticipant};
pub use questionnaire::{
    AnswerValue, Answers, CodedOption, ItemKind, Phase, QuestionItem, QuestionnaireResponse, QuestionnaireSchema,
};
pub use scales::{scale_reliability, score_scale, ReferenceStats, ScaleDefinition, ScaleScore};
pub use study::{
    CovariateSource, ManipulationCheck, ManipulationRule, OutcomeFit, ParticipantRecord, ScaleSummary, ScalesReport,
    StudyConfig,
};

use thiserror::Error;

use crate::domain::DomainError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("study configuration: {0}")]
    Config(String),
    #[error("missing answer for item {0}")]
    MissingItem(String),
    #[error("item {item} value {value} outside {min}..={max}")]
    OutOfRange { item: String, value: f64, min: i64, max: i64 },
    #[error("questionnaire rejected: {0}")]
    SchemaViolation(String),
    #[error("{phase} questionnaire already submitted for this session")]
    DuplicateSubmission { phase: Phase },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("participant {participant} has no value for covariate {name}")]
    MissingCovariate { participant: String, name: String },
    #[error("participant {participant} has no {scale} score")]
    MissingOutcome { participant: String, scale: String },
    #[error(transparent)]
    InvalidCondition(#[from] DomainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
