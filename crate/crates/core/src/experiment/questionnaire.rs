use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::domain::{millis_ts, ParticipantId, SessionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" => Ok(Phase::Pre),
            "post" => Ok(Phase::Post),
            other => Err(ExperimentError::SchemaViolation(format!("unknown phase {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedOption {
    pub label: String,
    pub code: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemKind {
    /// Integer rating in `min..=max`.
    Likert { min: i64, max: i64 },
    /// One of a fixed set of labels, each mapped to a numeric code.
    Coded { options: Vec<CodedOption> },
    Text {
        #[serde(default = "default_max_len")]
        max_len: usize,
    },
}

fn default_max_len() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionItem {
    pub id: String,
    pub prompt: String,
    #[serde(flatten)]
    pub kind: ItemKind,
    #[serde(default = "default_required")]
    pub required: bool,
}

fn default_required() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Number(f64),
    Text(String),
}

pub type Answers = BTreeMap<String, AnswerValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireSchema {
    pub phase: Phase,
    pub items: Vec<QuestionItem>,
}

impl QuestionnaireSchema {
    pub fn item(&self, id: &str) -> Option<&QuestionItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn check_config(&self) -> Result<(), ExperimentError> {
        let mut seen = BTreeSet::new();
        for item in &self.items {
            if !seen.insert(&item.id) {
                return Err(ExperimentError::Config(format!("{} schema repeats item {}", self.phase, item.id)));
            }
            match &item.kind {
                ItemKind::Likert { min, max } if min >= max => {
                    return Err(ExperimentError::Config(format!("item {} has empty range", item.id)))
                }
                ItemKind::Coded { options } if options.is_empty() => {
                    return Err(ExperimentError::Config(format!("item {} has no options", item.id)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Rejects unknown items, missing required items, and values outside an
    /// item's range or option set.
    pub fn validate(&self, answers: &Answers) -> Result<(), ExperimentError> {
        let violation = |msg: String| Err(ExperimentError::SchemaViolation(msg));
        if let Some(unknown) = answers.keys().find(|k| self.item(k).is_none()) {
            return violation(format!("unknown item {unknown:?}"));
        }
        for item in &self.items {
            let Some(value) = answers.get(&item.id) else {
                if item.required {
                    return violation(format!("missing required item {:?}", item.id));
                }
                continue;
            };
            match (&item.kind, value) {
                (ItemKind::Likert { min, max }, AnswerValue::Number(x)) => {
                    if x.fract() != 0.0 || *x < *min as f64 || *x > *max as f64 {
                        return violation(format!("{} must be an integer in {min}..={max}, got {x}", item.id));
                    }
                }
                (ItemKind::Coded { options }, AnswerValue::Text(label)) => {
                    if !options.iter().any(|o| o.label == *label) {
                        return violation(format!("{}: {label:?} is not an allowed option", item.id));
                    }
                }
                (ItemKind::Text { max_len }, AnswerValue::Text(text)) => {
                    if text.chars().count() > *max_len {
                        return violation(format!("{} is longer than {max_len} characters", item.id));
                    }
                }
                _ => return violation(format!("{} has the wrong answer type", item.id)),
            }
        }
        Ok(())
    }

    /// Numeric view of validated answers: Likert values as given, coded
    /// labels mapped to their codes. Text answers are omitted.
    pub fn numeric(&self, answers: &Answers) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for item in &self.items {
            match (&item.kind, answers.get(&item.id)) {
                (ItemKind::Likert { .. }, Some(AnswerValue::Number(x))) => {
                    out.insert(item.id.clone(), *x);
                }
                (ItemKind::Coded { options }, Some(AnswerValue::Text(label))) => {
                    if let Some(o) = options.iter().find(|o| o.label == *label) {
                        out.insert(item.id.clone(), o.code);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn text(&self, answers: &Answers, item: &str) -> Option<String> {
        match answers.get(item) {
            Some(AnswerValue::Text(t)) => Some(t.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub participant_id: ParticipantId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<SessionId>,
    pub phase: Phase,
    pub answers: Answers,
    #[serde(with = "millis_ts")]
    pub submitted_at: DateTime<Utc>,
}
