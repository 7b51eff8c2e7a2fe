//! Offline model validation: food-term overlap against a reference, triage
//! of low-overlap items, and human rubric scores with inter-coder
//! reliability.

mod batch;
mod job;
mod krippendorff;
mod lexicon;
mod overlap;
mod report;
mod rubric;

pub use batch::{run_batch, BatchConfig, BatchImage, ReferenceSource};
pub use job::{load_images, load_references, load_validation, EvalJob, JobOutput};
pub use krippendorff::{krippendorff_alpha, reliability, AlphaResult, Metric};
pub use lexicon::{extract_food_terms, FoodLexicon};
pub use overlap::{overlap_score, round2, triage, EvalItem, OverlapMode, TriageSummary, DEFAULT_THRESHOLD};
pub use report::{build_report, CriterionSummary, EvalReport};
pub use rubric::{
    band, band_counts, criterion_means, BandCounts, Criterion, CriterionBand, ValidationRecord, SCORE_MAX, SCORE_MIN,
};

use thiserror::Error;

use crate::backends::BackendError;
use crate::jsonl::JsonlError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference term set is empty")]
    EmptyReference,
    #[error("score {score} is outside 1..=10")]
    OutOfRange { score: i64 },
    #[error("record is missing criterion {0}")]
    MissingCriterion(Criterion),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}
