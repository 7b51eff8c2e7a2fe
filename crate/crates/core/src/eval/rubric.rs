use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Correctness,
    Relevance,
    Clarity,
    EdgeCase,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Correctness, Criterion::Relevance, Criterion::Clarity, Criterion::EdgeCase];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Correctness => "correctness",
            Criterion::Relevance => "relevance",
            Criterion::Clarity => "clarity",
            Criterion::EdgeCase => "edge_case",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| EvalError::Invalid(format!("unknown criterion {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionBand {
    Low,
    Medium,
    High,
}

pub const SCORE_MIN: u8 = 1;
pub const SCORE_MAX: u8 = 10;

/// 1–3 low, 4–7 medium, 8–10 high.
pub fn band(score: u8) -> Result<CriterionBand, EvalError> {
    match score {
        1..=3 => Ok(CriterionBand::Low),
        4..=7 => Ok(CriterionBand::Medium),
        8..=10 => Ok(CriterionBand::High),
        _ => Err(EvalError::OutOfRange { score: i64::from(score) }),
    }
}

/// One coder's scores for one item; every criterion present, each 1..=10.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord", into = "RawRecord")]
pub struct ValidationRecord {
    item_id: String,
    coder_id: String,
    scores: BTreeMap<Criterion, u8>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    item_id: String,
    coder_id: String,
    scores: BTreeMap<Criterion, i64>,
}

impl TryFrom<RawRecord> for ValidationRecord {
    type Error = EvalError;

    fn try_from(raw: RawRecord) -> Result<Self, Self::Error> {
        let mut scores = BTreeMap::new();
        for c in Criterion::ALL {
            let v = *raw.scores.get(&c).ok_or(EvalError::MissingCriterion(c))?;
            if !(i64::from(SCORE_MIN)..=i64::from(SCORE_MAX)).contains(&v) {
                return Err(EvalError::OutOfRange { score: v });
            }
            scores.insert(c, v as u8);
        }
        Ok(ValidationRecord { item_id: raw.item_id, coder_id: raw.coder_id, scores })
    }
}

impl From<ValidationRecord> for RawRecord {
    fn from(r: ValidationRecord) -> Self {
        RawRecord {
            item_id: r.item_id,
            coder_id: r.coder_id,
            scores: r.scores.into_iter().map(|(c, v)| (c, i64::from(v))).collect(),
        }
    }
}

impl ValidationRecord {
    /// Scores in [`Criterion::ALL`] order.
    pub fn new(item_id: impl Into<String>, coder_id: impl Into<String>, scores: [u8; 4]) -> Result<Self, EvalError> {
        RawRecord {
            item_id: item_id.into(),
            coder_id: coder_id.into(),
            scores: Criterion::ALL.into_iter().zip(scores.map(i64::from)).collect(),
        }
        .try_into()
    }

    pub fn item_id(&self) -> &str {
        &self.item_id
    }

    pub fn coder_id(&self) -> &str {
        &self.coder_id
    }

    pub fn score(&self, criterion: Criterion) -> u8 {
        self.scores[&criterion]
    }
}

/// Mean of every coder × item score, per criterion. Unrounded; reports
/// round to two decimals.
pub fn criterion_means(records: &[ValidationRecord]) -> Result<BTreeMap<Criterion, f64>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::InsufficientData("no validation records".into()));
    }
    Ok(Criterion::ALL
        .into_iter()
        .map(|c| {
            let total: u64 = records.iter().map(|r| u64::from(r.score(c))).sum();
            (c, total as f64 / records.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BandCounts {
    pub low: usize,
    pub medium: usize,
    pub high: usize,
}

pub fn band_counts(records: &[ValidationRecord], criterion: Criterion) -> BandCounts {
    let mut counts = BandCounts::default();
    for r in records {
        match band(r.score(criterion)).expect("records hold validated scores") {
            CriterionBand::Low => counts.low += 1,
            CriterionBand::Medium => counts.medium += 1,
            CriterionBand::High => counts.high += 1,
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_edges() {
        assert_eq!(band(3).unwrap(), CriterionBand::Low);
        assert_eq!(band(4).unwrap(), CriterionBand::Medium);
        assert_eq!(band(7).unwrap(), CriterionBand::Medium);
        assert_eq!(band(8).unwrap(), CriterionBand::High);
        assert!(matches!(band(11), Err(EvalError::OutOfRange { score: 11 })));
        assert!(band(0).is_err());
    }

    #[test]
    fn record_validation() {
        let ok = r#"{"item_id":"i","coder_id":"c","scores":{"correctness":5,"relevance":5,"clarity":5,"edge_case":5}}"#;
        assert!(serde_json::from_str::<ValidationRecord>(ok).is_ok());
        let missing = r#"{"item_id":"i","coder_id":"c","scores":{"correctness":5,"relevance":5,"clarity":5}}"#;
        assert!(serde_json::from_str::<ValidationRecord>(missing).is_err());
        let high = r#"{"item_id":"i","coder_id":"c","scores":{"correctness":11,"relevance":5,"clarity":5,"edge_case":5}}"#;
        assert!(serde_json::from_str::<ValidationRecord>(high).is_err());
    }

    #[test]
    fn means() {
        let one = [ValidationRecord::new("i", "c", [5, 5, 5, 5]).unwrap()];
        assert!(criterion_means(&one).unwrap().values().all(|m| *m == 5.0));
        let two = [
            ValidationRecord::new("i", "a", [4, 1, 1, 1]).unwrap(),
            ValidationRecord::new("i", "b", [6, 1, 1, 1]).unwrap(),
        ];
        assert_eq!(criterion_means(&two).unwrap()[&Criterion::Correctness], 5.0);
        assert!(criterion_means(&[]).is_err());
    }
}
