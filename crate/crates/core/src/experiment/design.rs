use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::domain::{Condition, Participant, ParticipantId};
use crate::stats::{ols_labeled, Matrix, RegressionResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignMatrixSpec {
    pub outcome: String,
    /// Cell every condition dummy is contrasted against.
    pub reference: Condition,
    pub covariates: Vec<String>,
}

/// One participant with computed scale scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredParticipant {
    pub participant: Participant,
    pub scores: BTreeMap<String, f64>,
    /// Numeric item answers the scores were computed from.
    #[serde(default)]
    pub items: BTreeMap<String, f64>,
}

impl ScoredParticipant {
    /// A covariate from the participant's demographics or predispositions.
    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.participant.demographics.get(name).or_else(|| self.participant.predispositions.get(name)).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub labels: Vec<String>,
    pub participant_ids: Vec<ParticipantId>,
    pub outcome: String,
}

pub fn dummy_label(condition: Condition) -> String {
    format!("{}_{}", condition.profile(), condition.model())
}

/// Intercept, one dummy per non-reference condition in canonical order,
/// then the covariates in the order `spec` lists them.
pub fn build_design_matrix(
    spec: &DesignMatrixSpec,
    participants: &[ScoredParticipant],
) -> Result<DesignMatrix, ExperimentError> {
    let dummies: Vec<Condition> = Condition::ALL.into_iter().filter(|c| *c != spec.reference).collect();
    let mut labels = vec!["intercept".to_owned()];
    labels.extend(dummies.iter().map(|c| dummy_label(*c)));
    labels.extend(spec.covariates.iter().cloned());
    let m = labels.len();
    if participants.len() <= m {
        return Err(ExperimentError::InsufficientData(format!(
            "{} participants for {m} columns; need more participants than columns",
            participants.len()
        )));
    }

    let mut data = Vec::with_capacity(participants.len() * m);
    let mut y = Vec::with_capacity(participants.len());
    let mut ids = Vec::with_capacity(participants.len());
    for p in participants {
        let id = &p.participant.id;
        let outcome = *p.scores.get(&spec.outcome).ok_or_else(|| ExperimentError::MissingOutcome {
            participant: id.to_string(),
            scale: spec.outcome.clone(),
        })?;
        data.push(1.0);
        let cond = p.participant.assigned_condition;
        data.extend(dummies.iter().map(|c| f64::from(u8::from(*c == cond))));
        for name in &spec.covariates {
            let v = p.covariate(name).ok_or_else(|| ExperimentError::MissingCovariate {
                participant: id.to_string(),
                name: name.clone(),
            })?;
            data.push(v);
        }
        y.push(outcome);
        ids.push(id.clone());
    }
    Ok(DesignMatrix {
        x: Matrix::new(participants.len(), m, data)?,
        y,
        labels,
        participant_ids: ids,
        outcome: spec.outcome.clone(),
    })
}

impl DesignMatrix {
    pub fn regress(&self) -> Result<RegressionResult, ExperimentError> {
        Ok(ols_labeled(&self.x, &self.y, &self.labels)?)
    }

    /// Header `participant_id,<labels>,<outcome>`, one row per participant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("participant_id");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        let _ = writeln!(out, ",{}", self.outcome);
        for (r, id) in self.participant_ids.iter().enumerate() {
            out.push_str(id.as_str());
            for v in self.x.row(r) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", self.y[r]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::now_millis;

    fn person(i: usize, cond: Condition) -> ScoredParticipant {
        ScoredParticipant {
            participant: Participant {
                id: format!("p{i}").into(),
                assigned_condition: cond,
                demographics: [("age".to_owned(), 20.0 + i as f64)].into(),
                predispositions: BTreeMap::new(),
                consent_at: now_millis(),
            },
            scores: [("care".to_owned(), 3.0)].into(),
            items: BTreeMap::new(),
        }
    }

    fn spec() -> DesignMatrixSpec {
        DesignMatrixSpec { outcome: "care".into(), reference: Condition::ALL[0], covariates: vec!["age".into()] }
    }

    #[test]
    fn reference_row_has_zero_dummies() {
        let people: Vec<_> = (0..10).map(|i| person(i, Condition::ALL[i % 7])).collect();
        let d = build_design_matrix(&spec(), &people).unwrap();
        assert_eq!(d.labels.len(), 8);
        assert_eq!(d.labels[1], "bot_llava_raw");
        assert_eq!(&d.x.row(0)[1..7], &[0.0; 6]);
        for r in 0..10 {
            let s: f64 = d.x.row(r)[1..7].iter().sum();
            assert!(s <= 1.0);
        }
    }

    #[test]
    fn missing_values() {
        let mut people: Vec<_> = (0..10).map(|i| person(i, Condition::ALL[0])).collect();
        people[3].participant.demographics.clear();
        assert!(matches!(build_design_matrix(&spec(), &people), Err(ExperimentError::MissingCovariate { .. })));
        people[3] = person(3, Condition::ALL[0]);
        people[4].scores.clear();
        assert!(matches!(build_design_matrix(&spec(), &people), Err(ExperimentError::MissingOutcome { .. })));
        assert!(matches!(build_design_matrix(&spec(), &people[..8]), Err(ExperimentError::InsufficientData(_))));
    }
}
