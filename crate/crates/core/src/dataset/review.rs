use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{DatasetError, StructuredQA, DEFAULT_QUESTION};
use crate::domain::{millis_ts, EdgeCaseLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    Approved,
    Edited,
    Rejected,
}

impl ReviewState {
    pub fn is_exportable(self) -> bool {
        matches!(self, ReviewState::Approved | ReviewState::Edited)
    }
}

impl fmt::Display for ReviewState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReviewState::Pending => "pending",
            ReviewState::Approved => "approved",
            ReviewState::Edited => "edited",
            ReviewState::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationContent {
    pub caption: String,
    pub qa: StructuredQA,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub image_key: String,
    #[serde(default = "default_question")]
    pub question: String,
    pub caption: String,
    pub qa: StructuredQA,
    pub review_state: ReviewState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_millis")]
    pub reviewed_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_case_label: Option<EdgeCaseLabel>,
    /// Generated content replaced by an edit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<AnnotationContent>,
}

fn default_question() -> String {
    DEFAULT_QUESTION.to_owned()
}

mod opt_millis {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match ts {
            Some(ts) => super::millis_ts::serialize(ts, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        #[derive(serde::Deserialize)]
        struct Wrap(#[serde(with = "super::millis_ts")] DateTime<Utc>);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

impl TrainingExample {
    pub fn pending(
        id: String,
        image_key: String,
        caption: String,
        qa: StructuredQA,
        edge_case_label: Option<EdgeCaseLabel>,
    ) -> Self {
        TrainingExample {
            id,
            image_key,
            question: default_question(),
            caption,
            qa,
            review_state: ReviewState::Pending,
            reviewer_id: None,
            reviewed_at: None,
            edge_case_label,
            original: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ReviewDecision {
    Approve,
    Edit {
        caption: String,
        qa: StructuredQA,
        #[serde(default)]
        edge_case_label: Option<EdgeCaseLabel>,
    },
    Reject,
}

impl ReviewDecision {
    fn action(&self) -> &'static str {
        match self {
            ReviewDecision::Approve => "approve",
            ReviewDecision::Edit { .. } => "edit",
            ReviewDecision::Reject => "reject",
        }
    }
}

/// Applies a reviewer decision. Only pending examples can be reviewed; the
/// allowed transitions are pending → approved | edited | rejected.
pub fn review(
    example: &TrainingExample,
    decision: ReviewDecision,
    reviewer: &str,
    at: DateTime<Utc>,
) -> Result<TrainingExample, DatasetError> {
    if example.review_state != ReviewState::Pending {
        return Err(DatasetError::InvalidTransition { from: example.review_state, action: decision.action() });
    }
    if reviewer.trim().is_empty() {
        return Err(DatasetError::Invalid("reviewer id is required".into()));
    }
    let mut next = example.clone();
    next.reviewer_id = Some(reviewer.to_owned());
    next.reviewed_at = Some(at);
    match decision {
        ReviewDecision::Approve => next.review_state = ReviewState::Approved,
        ReviewDecision::Reject => next.review_state = ReviewState::Rejected,
        ReviewDecision::Edit { caption, qa, edge_case_label } => {
            if caption.trim().is_empty() {
                return Err(DatasetError::Invalid("caption is empty".into()));
            }
            qa.validate()?;
            next.original = Some(AnnotationContent { caption: example.caption.clone(), qa: example.qa.clone() });
            next.caption = caption;
            next.qa = qa;
            if edge_case_label.is_some() {
                next.edge_case_label = edge_case_label;
            }
            next.review_state = ReviewState::Edited;
        }
    }
    Ok(next)
}
