//! Export in the LLaVA conversation layout: one JSON array of
//! `{id, image, caption, conversations}` records.
//!
//! The model turn flattens the structured Q&A into paragraphs separated by
//! blank lines: greeting, nutrition, one paragraph per recipe, closing.
//! Section blocks never contain blank lines, so the split is unambiguous.

use serde::{Deserialize, Serialize};

use super::{DatasetError, Recipe, StructuredQA, TrainingExample};

pub const IMAGE_TOKEN: &str = "<image>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub from: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub id: String,
    pub image: String,
    pub caption: String,
    pub conversations: Vec<ConversationTurn>,
}

impl ExportRecord {
    /// The structured Q&A recovered from the model turn.
    pub fn qa(&self) -> Result<StructuredQA, DatasetError> {
        let turn = self
            .conversations
            .iter()
            .find(|t| t.from == "gpt")
            .ok_or_else(|| DatasetError::Invalid(format!("record {} has no model turn", self.id)))?;
        parse_model_turn(&turn.value)
    }
}

pub fn render_model_turn(qa: &StructuredQA) -> String {
    let mut paragraphs = vec![qa.greeting.clone(), qa.nutrition_info.clone()];
    for (i, recipe) in qa.recipes.iter().enumerate() {
        let mut p = format!("Recipe {}: {}", i + 1, recipe.title);
        for (j, step) in recipe.steps.iter().enumerate() {
            p.push_str(&format!("\n{}. {}", j + 1, step));
        }
        paragraphs.push(p);
    }
    paragraphs.push(qa.closing.clone());
    paragraphs.join("\n\n")
}

pub fn parse_model_turn(text: &str) -> Result<StructuredQA, DatasetError> {
    let paragraphs: Vec<&str> = text.split("\n\n").map(str::trim).filter(|p| !p.is_empty()).collect();
    if paragraphs.len() < 3 {
        return Err(DatasetError::Parse {
            section: "model_turn".into(),
            detail: format!("expected at least 3 paragraphs, found {}", paragraphs.len()),
        });
    }
    let last = paragraphs.len() - 1;
    let mut recipes = Vec::new();
    for (i, p) in paragraphs[2..last].iter().enumerate() {
        let mut lines = p.lines();
        let header = lines.next().unwrap_or_default();
        let prefix = format!("Recipe {}: ", i + 1);
        let title = header.strip_prefix(&prefix).ok_or_else(|| DatasetError::Parse {
            section: "recipes".into(),
            detail: format!("expected {prefix:?}, found {header:?}"),
        })?;
        let mut steps = Vec::new();
        for (j, line) in lines.enumerate() {
            let numbered = format!("{}. ", j + 1);
            let step = line.strip_prefix(&numbered).ok_or_else(|| DatasetError::Parse {
                section: "steps".into(),
                detail: format!("expected step {} in {title:?}, found {line:?}", j + 1),
            })?;
            steps.push(step.to_owned());
        }
        recipes.push(Recipe { title: title.to_owned(), steps });
    }
    let qa = StructuredQA {
        greeting: paragraphs[0].to_owned(),
        nutrition_info: paragraphs[1].to_owned(),
        recipes,
        closing: paragraphs[last].to_owned(),
    };
    qa.validate()?;
    Ok(qa)
}

/// Records for every approved or edited example, sorted by id.
pub fn export_records(examples: &[TrainingExample]) -> Result<Vec<ExportRecord>, DatasetError> {
    let mut records: Vec<ExportRecord> = examples
        .iter()
        .filter(|ex| ex.review_state.is_exportable())
        .map(|ex| ExportRecord {
            id: ex.id.clone(),
            image: ex.image_key.clone(),
            caption: ex.caption.clone(),
            conversations: vec![
                ConversationTurn { from: "human".into(), value: format!("{IMAGE_TOKEN}\n{}", ex.question) },
                ConversationTurn { from: "gpt".into(), value: render_model_turn(&ex.qa) },
            ],
        })
        .collect();
    if records.is_empty() {
        return Err(DatasetError::NothingToExport);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

pub fn export_json(examples: &[TrainingExample]) -> Result<String, DatasetError> {
    let mut json = serde_json::to_string_pretty(&export_records(examples)?)?;
    json.push('\n');
    Ok(json)
}

pub fn parse_export(json: &str) -> Result<Vec<ExportRecord>, DatasetError> {
    Ok(serde_json::from_str(json)?)
}
