use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::domain::EdgeCaseLabel;

pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// |R ∩ C| / |R|
    #[default]
    Recall,
    /// |R ∩ C| / |R ∪ C|
    Jaccard,
}

pub fn overlap_score(
    reference: &BTreeSet<String>,
    candidate: &BTreeSet<String>,
    mode: OverlapMode,
) -> Result<f64, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let shared = reference.intersection(candidate).count() as f64;
    Ok(match mode {
        OverlapMode::Recall => shared / reference.len() as f64,
        OverlapMode::Jaccard => shared / reference.union(candidate).count() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    pub prompt: String,
    #[serde(default)]
    pub response: String,
    pub reference_terms: BTreeSet<String>,
    #[serde(default)]
    pub candidate_terms: BTreeSet<String>,
    #[serde(default)]
    pub overlap: Option<f64>,
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_case_label: Option<EdgeCaseLabel>,
}

impl EvalItem {
    /// Sets overlap and flag from the term sets.
    pub fn score(&mut self, mode: OverlapMode, threshold: f64) -> Result<(), EvalError> {
        let score = overlap_score(&self.reference_terms, &self.candidate_terms, mode)?;
        self.overlap = Some(score);
        self.flagged = score < threshold;
        Ok(())
    }

    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageSummary {
    pub threshold: f64,
    pub scored: usize,
    pub flagged: usize,
    pub errored: usize,
    /// Mean overlap over scored items, to two decimals; null when none.
    pub mean_overlap: Option<f64>,
    #[serde(skip)]
    pub mean_overlap_exact: Option<f64>,
    pub flagged_ids: Vec<String>,
}

/// Flags every scored item strictly below `threshold`. Items without a
/// score (errored) are counted but never flagged.
pub fn triage(items: &mut [EvalItem], threshold: f64) -> TriageSummary {
    let mut sum = 0.0;
    let mut scored = 0;
    let mut errored = 0;
    let mut flagged_ids = Vec::new();
    for item in items.iter_mut() {
        match item.overlap {
            Some(score) => {
                scored += 1;
                sum += score;
                item.flagged = score < threshold;
                if item.flagged {
                    flagged_ids.push(item.id.clone());
                }
            }
            None => {
                item.flagged = false;
                errored += 1;
            }
        }
    }
    let mean = (scored > 0).then(|| sum / scored as f64);
    TriageSummary {
        threshold,
        scored,
        flagged: flagged_ids.len(),
        errored,
        mean_overlap: mean.map(round2),
        mean_overlap_exact: mean,
        flagged_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn item(id: &str, overlap: Option<f64>) -> EvalItem {
        EvalItem {
            id: id.into(),
            image_ref: None,
            prompt: String::new(),
            response: String::new(),
            reference_terms: BTreeSet::new(),
            candidate_terms: BTreeSet::new(),
            overlap,
            flagged: false,
            error: overlap.is_none().then(|| "boom".into()),
            edge_case_label: None,
        }
    }

    #[test]
    fn recall_and_jaccard() {
        let r = set(&["carrot", "spinach", "lettuce"]);
        let c = set(&["carrot", "spinach", "tomato"]);
        assert!((overlap_score(&r, &c, OverlapMode::Recall).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((overlap_score(&r, &c, OverlapMode::Jaccard).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(overlap_score(&r, &r, OverlapMode::Recall).unwrap(), 1.0);
        assert_eq!(overlap_score(&r, &set(&["egg"]), OverlapMode::Recall).unwrap(), 0.0);
        assert!(matches!(overlap_score(&set(&[]), &c, OverlapMode::Recall), Err(EvalError::EmptyReference)));
    }

    #[test]
    fn strict_threshold() {
        let mut items = vec![item("a", Some(0.59)), item("b", Some(0.60)), item("c", Some(0.80))];
        let s = triage(&mut items, DEFAULT_THRESHOLD);
        assert_eq!(s.flagged_ids, ["a"]);
        assert_eq!(s.mean_overlap, Some(0.66));
    }

    #[test]
    fn empty_and_errored() {
        let s = triage(&mut [], DEFAULT_THRESHOLD);
        assert_eq!((s.scored, s.flagged, s.mean_overlap), (0, 0, None));
        let mut items = vec![item("a", None), item("b", Some(1.0))];
        let s = triage(&mut items, DEFAULT_THRESHOLD);
        assert_eq!((s.scored, s.errored, s.flagged), (1, 1, 0));
        assert!(serde_json::to_string(&triage(&mut [], 0.6)).unwrap().contains("\"mean_overlap\":null"));
    }
}
