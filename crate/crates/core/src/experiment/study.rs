use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    build_design_matrix, score_scale, scale_reliability, Answers, DesignMatrixSpec, ExperimentError, Phase,
    QuestionnaireSchema, ReferenceStats, ScaleDefinition, ScoredParticipant,
};
use crate::domain::{from_millis, millis_ts, Condition, Participant, ParticipantId, Profile};
use crate::stats::{describe, RegressionResult};

const SHIPPED: &str = include_str!("../../data/study.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManipulationRule {
    pub name_item: String,
    pub description_item: String,
    pub pet_aliases: Vec<String>,
    pub bot_aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManipulationCheck {
    pub participant_id: ParticipantId,
    pub recalled_name: String,
    pub recalled_profile_description: String,
    pub passed: bool,
}

impl ManipulationRule {
    fn aliases(&self, profile: Profile) -> &[String] {
        match profile {
            Profile::Pet => &self.pet_aliases,
            Profile::Bot => &self.bot_aliases,
        }
    }

    /// Passes when either answer mentions an alias of the assigned profile
    /// (case-insensitive substring).
    pub fn check(&self, participant: &ParticipantId, assigned: Profile, name: &str, description: &str) -> ManipulationCheck {
        let haystack = format!("{name}\n{description}").to_lowercase();
        let passed = self.aliases(assigned).iter().any(|a| haystack.contains(&a.to_lowercase()));
        ManipulationCheck {
            participant_id: participant.clone(),
            recalled_name: name.to_owned(),
            recalled_profile_description: description.to_owned(),
            passed,
        }
    }
}

/// A covariate read from a coded questionnaire item (demographic) or from
/// a scale score (predisposition).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSource {
    pub name: String,
    #[serde(default)]
    pub item: Option<String>,
    #[serde(default)]
    pub scale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub outcomes: Vec<String>,
    pub reference: Condition,
    pub manipulation: ManipulationRule,
    pub covariates: Vec<CovariateSource>,
    pub scales: Vec<ScaleDefinition>,
    pub pre: QuestionnaireSchema,
    pub post: QuestionnaireSchema,
}

/// Raw answers for one participant, as collected by the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: ParticipantId,
    pub condition: Condition,
    #[serde(default = "epoch", with = "millis_ts")]
    pub consent_at: DateTime<Utc>,
    pub pre: Answers,
    pub post: Answers,
}

fn epoch() -> DateTime<Utc> {
    from_millis(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
    pub alpha: Option<f64>,
    pub reference: Option<ReferenceStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalesReport {
    pub participants: usize,
    pub manipulation_passed: usize,
    pub scales: Vec<ScaleSummary>,
}

/// One outcome's model, or why it could not be fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutcomeFit {
    Fitted(RegressionResult),
    Failed { error: String },
}

impl StudyConfig {
    pub fn shipped() -> Self {
        Self::parse(SHIPPED).expect("bundled study config is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn schema(&self, phase: Phase) -> &QuestionnaireSchema {
        match phase {
            Phase::Pre => &self.pre,
            Phase::Post => &self.post,
        }
    }

    pub fn scale(&self, name: &str) -> Option<&ScaleDefinition> {
        self.scales.iter().find(|s| s.name == name)
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    pub fn design_spec(&self, outcome: &str) -> Result<DesignMatrixSpec, ExperimentError> {
        if self.scale(outcome).is_none() {
            return Err(ExperimentError::Config(format!("unknown outcome scale {outcome:?}")));
        }
        Ok(DesignMatrixSpec { outcome: outcome.to_owned(), reference: self.reference, covariates: self.covariate_names() })
    }

    fn check(&self) -> Result<(), ExperimentError> {
        let cfg = |m: String| Err(ExperimentError::Config(m));
        if self.pre.phase != Phase::Pre || self.post.phase != Phase::Post {
            return cfg("pre/post schemas carry the wrong phase".into());
        }
        self.pre.check_config()?;
        self.post.check_config()?;
        let items: BTreeSet<&str> = self.pre.items.iter().chain(&self.post.items).map(|i| i.id.as_str()).collect();
        if items.len() != self.pre.items.len() + self.post.items.len() {
            return cfg("an item id appears in both phases".into());
        }
        for s in &self.scales {
            s.validate()?;
            if let Some(missing) = s.item_ids.iter().find(|i| !items.contains(i.as_str())) {
                return cfg(format!("scale {} uses unknown item {missing}", s.name));
            }
        }
        for o in &self.outcomes {
            if self.scale(o).is_none() {
                return cfg(format!("outcome {o} is not a scale"));
            }
        }
        let mut names = BTreeSet::new();
        for c in &self.covariates {
            if !names.insert(&c.name) {
                return cfg(format!("covariate {} registered twice", c.name));
            }
            match (&c.item, &c.scale) {
                (Some(i), None) if items.contains(i.as_str()) => {}
                (None, Some(s)) if self.scale(s).is_some() => {}
                _ => return cfg(format!("covariate {} needs exactly one known item or scale", c.name)),
            }
        }
        for item in [&self.manipulation.name_item, &self.manipulation.description_item] {
            if self.post.item(item).is_none() {
                return cfg(format!("manipulation item {item} is not in the post questionnaire"));
            }
        }
        Ok(())
    }

    /// Validates both questionnaires, scores every scale, and derives the
    /// covariates and manipulation check.
    pub fn score_participant(
        &self,
        record: &ParticipantRecord,
    ) -> Result<(ScoredParticipant, ManipulationCheck), ExperimentError> {
        self.pre.validate(&record.pre)?;
        self.post.validate(&record.post)?;
        let mut items = self.pre.numeric(&record.pre);
        items.extend(self.post.numeric(&record.post));

        let id = &record.participant_id;
        let mut scores = BTreeMap::new();
        for scale in &self.scales {
            scores.insert(scale.name.clone(), score_scale(scale, id, &items)?.value);
        }
        let mut demographics = BTreeMap::new();
        let mut predispositions = BTreeMap::new();
        for c in &self.covariates {
            match (&c.item, &c.scale) {
                (Some(item), _) => {
                    let v = *items.get(item).ok_or_else(|| ExperimentError::MissingCovariate {
                        participant: id.to_string(),
                        name: c.name.clone(),
                    })?;
                    demographics.insert(c.name.clone(), v);
                }
                (_, Some(scale)) => {
                    predispositions.insert(c.name.clone(), scores[scale]);
                }
                (None, None) => unreachable!("checked at load"),
            }
        }
        let rule = &self.manipulation;
        let manipulation = rule.check(
            id,
            record.condition.profile(),
            &self.post.text(&record.post, &rule.name_item).unwrap_or_default(),
            &self.post.text(&record.post, &rule.description_item).unwrap_or_default(),
        );
        let participant = Participant {
            id: id.clone(),
            assigned_condition: record.condition,
            demographics,
            predispositions,
            consent_at: record.consent_at,
        };
        Ok((ScoredParticipant { participant, scores, items }, manipulation))
    }

    pub fn score_all(
        &self,
        records: &[ParticipantRecord],
    ) -> Result<(Vec<ScoredParticipant>, Vec<ManipulationCheck>), ExperimentError> {
        let mut scored = Vec::with_capacity(records.len());
        let mut checks = Vec::with_capacity(records.len());
        for r in records {
            let (s, c) = self.score_participant(r)?;
            scored.push(s);
            checks.push(c);
        }
        Ok((scored, checks))
    }

    /// Mean, SD and Cronbach's alpha of every scale.
    pub fn scale_summaries(&self, participants: &[ScoredParticipant]) -> Result<Vec<ScaleSummary>, ExperimentError> {
        let mut out = Vec::new();
        for scale in &self.scales {
            let values: Vec<f64> = participants.iter().filter_map(|p| p.scores.get(&scale.name).copied()).collect();
            if values.is_empty() {
                continue;
            }
            let d = describe(&values)?;
            let responses: Vec<&BTreeMap<String, f64>> = participants.iter().map(|p| &p.items).collect();
            let alpha = scale_reliability(scale, &responses).ok().map(|r| r.alpha);
            out.push(ScaleSummary {
                name: scale.name.clone(),
                n: d.n,
                mean: d.mean,
                sd: d.sd,
                alpha,
                reference: scale.reference_stats.clone(),
            });
        }
        Ok(out)
    }

    pub fn scales_report(&self, records: &[ParticipantRecord]) -> Result<ScalesReport, ExperimentError> {
        let (scored, checks) = self.score_all(records)?;
        Ok(ScalesReport {
            participants: scored.len(),
            manipulation_passed: checks.iter().filter(|c| c.passed).count(),
            scales: self.scale_summaries(&scored)?,
        })
    }

    /// Fits every configured outcome, or just `only`. With
    /// `passed_only`, participants failing the manipulation check are
    /// dropped first.
    pub fn regression_report(
        &self,
        records: &[ParticipantRecord],
        only: Option<&str>,
        passed_only: bool,
    ) -> Result<BTreeMap<String, OutcomeFit>, ExperimentError> {
        let (scored, checks) = self.score_all(records)?;
        let kept: Vec<ScoredParticipant> =
            scored.into_iter().zip(&checks).filter(|(_, c)| !passed_only || c.passed).map(|(s, _)| s).collect();
        let outcomes: Vec<String> = match only {
            Some(o) => {
                self.design_spec(o)?;
                vec![o.to_owned()]
            }
            None => self.outcomes.clone(),
        };
        let mut out = BTreeMap::new();
        for o in outcomes {
            let fit = match self.regress(&kept, &o) {
                Ok(r) => OutcomeFit::Fitted(r),
                Err(e) => OutcomeFit::Failed { error: e.to_string() },
            };
            out.insert(o, fit);
        }
        Ok(out)
    }

    pub fn regress(&self, participants: &[ScoredParticipant], outcome: &str) -> Result<RegressionResult, ExperimentError> {
        build_design_matrix(&self.design_spec(outcome)?, participants)?.regress()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::AnswerValue;

    #[test]
    fn shipped_config_has_fourteen_predictors() {
        let s = StudyConfig::shipped();
        assert_eq!(s.covariates.len(), 8);
        assert_eq!(s.outcomes.len(), 5);
        assert_eq!(s.scale("ueq").unwrap().item_ids.len(), 8);
        assert_eq!(s.scale("care").unwrap().item_ids.len(), 4);
        assert_eq!(s.scale("interest").unwrap().item_ids.len(), 3);
    }

    #[test]
    fn manipulation_rule() {
        let rule = StudyConfig::shipped().manipulation;
        let p: ParticipantId = "p".into();
        assert!(rule.check(&p, Profile::Pet, "Purrfessor", "").passed);
        assert!(rule.check(&p, Profile::Pet, "not sure", "A CAT with glasses").passed);
        assert!(!rule.check(&p, Profile::Pet, "NutriBot", "a robot").passed);
        assert!(rule.check(&p, Profile::Bot, "", "a little robot icon").passed);
    }

    #[test]
    fn scores_a_participant() {
        let s = StudyConfig::shipped();
        let mut pre: Answers = BTreeMap::new();
        let mut post: Answers = BTreeMap::new();
        for item in &s.pre.items {
            let v = match &item.kind {
                crate::experiment::ItemKind::Coded { options } => AnswerValue::Text(options[0].label.clone()),
                _ => AnswerValue::Number(3.0),
            };
            pre.insert(item.id.clone(), v);
        }
        for item in &s.post.items {
            let v = match &item.kind {
                crate::experiment::ItemKind::Text { .. } => AnswerValue::Text("Purrfessor".into()),
                _ => AnswerValue::Number(4.0),
            };
            post.insert(item.id.clone(), v);
        }
        let record = ParticipantRecord {
            participant_id: "p1".into(),
            condition: Condition::ALL[5],
            consent_at: from_millis(0),
            pre,
            post,
        };
        let (scored, check) = s.score_participant(&record).unwrap();
        assert!(check.passed);
        assert_eq!(scored.scores["care"], 4.0);
        // ueq has three reverse-coded items on 1..7: (5*4 + 3*4) / 8
        assert_eq!(scored.scores["ueq"], 4.0);
        assert_eq!(scored.participant.demographics["gender"], 1.0);
        // ai_anxiety reverses its 4th item on 1..5: (3+3+3+3)/4
        assert_eq!(scored.participant.predispositions["ai_anxiety"], 3.0);
        assert_eq!(scored.participant.demographics.len() + scored.participant.predispositions.len(), 8);
    }
}
