use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::domain::ParticipantId;
use crate::stats::{cronbach_alpha, Matrix, ReliabilityResult};

/// Reference summary for a scale, kept for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub mean: f64,
    pub sd: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDefinition {
    pub name: String,
    pub item_ids: Vec<String>,
    pub min: i64,
    pub max: i64,
    #[serde(default)]
    pub reverse_coded: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_stats: Option<ReferenceStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleScore {
    pub participant_id: ParticipantId,
    pub scale: String,
    pub value: f64,
}

impl ScaleDefinition {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(format!("scale {}: {msg}", self.name)));
        if self.item_ids.len() < 2 {
            return bad("needs at least two items".into());
        }
        if self.min >= self.max {
            return bad(format!("range {}..{} is empty", self.min, self.max));
        }
        let unique: BTreeSet<&String> = self.item_ids.iter().collect();
        if unique.len() != self.item_ids.len() {
            return bad("duplicate item ids".into());
        }
        if let Some(r) = self.reverse_coded.iter().find(|r| !unique.contains(r)) {
            return bad(format!("reverse-coded item {r} is not on the scale"));
        }
        Ok(())
    }

    /// An item's answer after range checking and reverse coding
    /// (x → min + max − x).
    fn coded(&self, item: &str, answers: &BTreeMap<String, f64>) -> Result<f64, ExperimentError> {
        let x = *answers.get(item).ok_or_else(|| ExperimentError::MissingItem(item.to_owned()))?;
        if !x.is_finite() || x < self.min as f64 || x > self.max as f64 {
            return Err(ExperimentError::OutOfRange { item: item.to_owned(), value: x, min: self.min, max: self.max });
        }
        Ok(if self.reverse_coded.contains(item) { (self.min + self.max) as f64 - x } else { x })
    }

    /// Reverse-corrected item values in item order.
    pub fn coded_items(&self, answers: &BTreeMap<String, f64>) -> Result<Vec<f64>, ExperimentError> {
        self.item_ids.iter().map(|item| self.coded(item, answers)).collect()
    }
}

/// Mean of the reverse-corrected items.
pub fn score_scale(
    def: &ScaleDefinition,
    participant: &ParticipantId,
    answers: &BTreeMap<String, f64>,
) -> Result<ScaleScore, ExperimentError> {
    let items = def.coded_items(answers)?;
    Ok(ScaleScore {
        participant_id: participant.clone(),
        scale: def.name.clone(),
        value: items.iter().sum::<f64>() / items.len() as f64,
    })
}

/// Cronbach's alpha of a scale over respondents' coded items.
pub fn scale_reliability(
    def: &ScaleDefinition,
    responses: &[&BTreeMap<String, f64>],
) -> Result<ReliabilityResult, ExperimentError> {
    let rows = responses.iter().map(|a| def.coded_items(a)).collect::<Result<Vec<_>, _>>()?;
    Ok(cronbach_alpha(&Matrix::from_rows(&rows)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def(items: &[&str], reverse: &[&str]) -> ScaleDefinition {
        ScaleDefinition {
            name: "s".into(),
            item_ids: items.iter().map(|s| s.to_string()).collect(),
            min: 1,
            max: 5,
            reverse_coded: reverse.iter().map(|s| s.to_string()).collect(),
            reference_stats: None,
        }
    }

    fn answers(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn plain_mean() {
        let s = score_scale(&def(&["a", "b", "c"], &[]), &"p".into(), &answers(&[("a", 4.0), ("b", 5.0), ("c", 5.0)]))
            .unwrap();
        assert!((s.value - 14.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reverse_coding() {
        let d = def(&["a", "b"], &["a"]);
        let s = score_scale(&d, &"p".into(), &answers(&[("a", 2.0), ("b", 4.0)])).unwrap();
        assert_eq!(s.value, 4.0);
    }

    #[test]
    fn errors() {
        let d = def(&["a", "b"], &[]);
        assert!(matches!(
            score_scale(&d, &"p".into(), &answers(&[("a", 2.0)])),
            Err(ExperimentError::MissingItem(i)) if i == "b"
        ));
        assert!(matches!(
            score_scale(&d, &"p".into(), &answers(&[("a", 2.0), ("b", 6.0)])),
            Err(ExperimentError::OutOfRange { .. })
        ));
        assert!(def(&["a"], &[]).validate().is_err());
        assert!(def(&["a", "b"], &["z"]).validate().is_err());
    }
}
