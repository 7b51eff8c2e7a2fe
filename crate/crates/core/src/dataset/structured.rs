//! The sectioned text format exchanged between the annotation generator and
//! its parser:
//!
//! ```text
//! [CAPTION]
//! Fresh carrots and spinach on a cutting board.
//! [GREETING]
//! Hi there! Those look delicious.
//! [NUTRITION]
//! Carrots are rich in beta-carotene...
//! [RECIPES]
//! Recipe: Carrot Spinach Salad
//! [STEPS]
//! 1. Wash the spinach.
//! 2. Grate the carrots and toss.
//! [CLOSING]
//! Enjoy, and tell me how it turns out!
//! ```
//!
//! An empty `[RECIPES]` section marks a non-food image.

use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const ANNOTATION_MARKER: &str = "[CAPTION]";

const SECTIONS: [&str; 5] = ["CAPTION", "GREETING", "NUTRITION", "RECIPES", "CLOSING"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub title: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredQA {
    pub greeting: String,
    pub nutrition_info: String,
    pub recipes: Vec<Recipe>,
    pub closing: String,
}

impl StructuredQA {
    /// No recipes: the image holds no food and `nutrition_info` carries a
    /// factual description instead.
    pub fn is_non_food(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (name, text) in
            [("greeting", &self.greeting), ("nutrition", &self.nutrition_info), ("closing", &self.closing)]
        {
            check_block(name, text)?;
        }
        for recipe in &self.recipes {
            check_line("recipe title", &recipe.title)?;
            if recipe.steps.len() < 2 {
                return Err(DatasetError::Invalid(format!(
                    "recipe {:?} needs at least 2 steps, has {}",
                    recipe.title,
                    recipe.steps.len()
                )));
            }
            for step in &recipe.steps {
                check_line("recipe step", step)?;
            }
        }
        Ok(())
    }
}

fn check_block(name: &str, text: &str) -> Result<(), DatasetError> {
    if text.trim().is_empty() {
        return Err(DatasetError::Invalid(format!("{name} is empty")));
    }
    if text != text.trim() || text.lines().any(|l| l.trim().is_empty() || is_header(l.trim())) {
        return Err(DatasetError::Invalid(format!("{name} must be trimmed, without blank or header lines")));
    }
    Ok(())
}

fn check_line(name: &str, text: &str) -> Result<(), DatasetError> {
    if text.trim().is_empty() || text.contains('\n') || text != text.trim() || is_header(text) {
        return Err(DatasetError::Invalid(format!("{name} must be a single non-empty line")));
    }
    Ok(())
}

fn is_header(line: &str) -> bool {
    line.len() > 2 && line.starts_with('[') && line.ends_with(']') && line[1..line.len() - 1].chars().all(|c| c.is_ascii_uppercase())
}

/// Instruction sent with each image to the annotation model.
pub fn annotation_prompt() -> String {
    "Look carefully at this image and write training material for a friendly nutrition chatbot.\n\
     Answer in exactly this layout, keeping every header line:\n\
     [CAPTION]\n\
     <one detailed sentence naming every visible ingredient>\n\
     [GREETING]\n\
     <a warm greeting to the user>\n\
     [NUTRITION]\n\
     <nutrition facts for the identified ingredients>\n\
     [RECIPES]\n\
     Recipe: <title>\n\
     [STEPS]\n\
     1. <step>\n\
     2. <step>\n\
     <repeat Recipe/[STEPS] for each healthy recipe>\n\
     [CLOSING]\n\
     <a closing message inviting the user to keep chatting>\n\
     If the image contains no food, leave [RECIPES] empty and describe what is visible under \
     [NUTRITION] without refusing."
        .to_owned()
}

pub fn render_annotation(caption: &str, qa: &StructuredQA) -> String {
    let mut out = String::new();
    out.push_str("[CAPTION]\n");
    out.push_str(caption);
    out.push_str("\n[GREETING]\n");
    out.push_str(&qa.greeting);
    out.push_str("\n[NUTRITION]\n");
    out.push_str(&qa.nutrition_info);
    out.push_str("\n[RECIPES]\n");
    for recipe in &qa.recipes {
        out.push_str("Recipe: ");
        out.push_str(&recipe.title);
        out.push_str("\n[STEPS]\n");
        for (i, step) in recipe.steps.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, step));
        }
    }
    out.push_str("[CLOSING]\n");
    out.push_str(&qa.closing);
    out.push('\n');
    out
}

/// Parses model output in the sectioned layout. Missing or empty sections
/// are errors; nothing is silently dropped.
pub fn parse_annotation(text: &str) -> Result<(String, StructuredQA), DatasetError> {
    let mut sections: Vec<(&str, Vec<&str>)> = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.starts_with("```") {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if let Some(section) = SECTIONS.iter().find(|s| **s == name) {
                if sections.iter().any(|(s, _)| s == section) {
                    return Err(DatasetError::Parse {
                        section: section.to_lowercase(),
                        detail: "section appears twice".into(),
                    });
                }
                sections.push((section, Vec::new()));
                continue;
            }
        }
        // Text before the first header is preamble and ignored.
        if let Some((_, lines)) = sections.last_mut() {
            lines.push(line);
        }
    }

    let body = |name: &str| -> Result<&Vec<&str>, DatasetError> {
        sections.iter().find(|(s, _)| *s == name).map(|(_, l)| l).ok_or_else(|| DatasetError::Parse {
            section: name.to_lowercase(),
            detail: "section missing".into(),
        })
    };
    let block = |name: &str| -> Result<String, DatasetError> {
        let joined = body(name)?.iter().filter(|l| !l.is_empty()).copied().collect::<Vec<_>>().join("\n");
        if joined.is_empty() {
            return Err(DatasetError::Parse { section: name.to_lowercase(), detail: "section is empty".into() });
        }
        Ok(joined)
    };

    let caption = block("CAPTION")?;
    let greeting = block("GREETING")?;
    let nutrition_info = block("NUTRITION")?;
    let recipes = parse_recipes(body("RECIPES")?)?;
    let closing = block("CLOSING")?;
    let qa = StructuredQA { greeting, nutrition_info, recipes, closing };
    qa.validate().map_err(|e| DatasetError::Parse { section: "recipes".into(), detail: e.to_string() })?;
    Ok((caption, qa))
}

fn parse_recipes(lines: &[&str]) -> Result<Vec<Recipe>, DatasetError> {
    let err = |detail: String| DatasetError::Parse { section: "recipes".into(), detail };
    let mut recipes: Vec<Recipe> = Vec::new();
    let mut in_steps = false;
    for line in lines.iter().filter(|l| !l.is_empty()) {
        if let Some(title) = line.strip_prefix("Recipe:") {
            recipes.push(Recipe { title: title.trim().to_owned(), steps: Vec::new() });
            in_steps = false;
        } else if *line == "[STEPS]" {
            if recipes.is_empty() {
                return Err(err("[STEPS] before any Recipe: line".into()));
            }
            in_steps = true;
        } else if in_steps {
            let step = strip_numbering(line);
            if !step.is_empty() {
                recipes.last_mut().expect("checked above").steps.push(step.to_owned());
            }
        } else if recipes.is_empty() && matches!(line.to_ascii_lowercase().as_str(), "none" | "n/a" | "-") {
            continue;
        } else {
            return Err(err(format!("unexpected line {line:?}")));
        }
    }
    if let Some(bad) = recipes.iter().find(|r| r.steps.len() < 2) {
        return Err(DatasetError::Parse {
            section: "steps".into(),
            detail: format!("recipe {:?} has {} steps", bad.title, bad.steps.len()),
        });
    }
    Ok(recipes)
}

fn strip_numbering(line: &str) -> &str {
    let trimmed = line.trim_start_matches(|c: char| c.is_ascii_digit());
    if trimmed.len() < line.len() {
        if let Some(rest) = trimmed.strip_prefix('.').or_else(|| trimmed.strip_prefix(')')) {
            return rest.trim();
        }
    }
    line.strip_prefix("- ").map(str::trim).unwrap_or(line)
}
