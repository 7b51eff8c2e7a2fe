use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::backends::PersonaTemplate;
use crate::domain::Condition;

pub const MEAL_PLAN_TOOLTIP: &str = "Click here to generate a custom meal plan based on your preferences.";

pub const DEFAULT_SUGGESTIONS: [&str; 4] = [
    "Please take a look at my refrigerator and tell me what healthy meals I can cook!",
    "Have a dish in mind? Upload an image, and we\u{2019}ll find a matching recipe.",
    "Looking for a Seafood Pasta recipe today?",
    "Want to explore high-protein vegetarian meals?",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuItem {
    pub key: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkthroughStep {
    /// UI element the step highlights.
    pub element: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaDisplay {
    pub display_name: String,
    pub avatar_key: String,
}

/// Condition-independent interface content. Loadable from TOML so a study
/// can change it without a client rebuild.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiContent {
    pub suggestions: Vec<String>,
    pub menu: Vec<MenuItem>,
    /// Menu key to hover hint.
    pub tooltips: BTreeMap<String, String>,
    pub walkthrough_steps: Vec<WalkthroughStep>,
}

impl Default for UiContent {
    fn default() -> Self {
        let menu = [
            ("chat", "Chat"),
            ("meal_plan", "Meal Plan"),
            ("misinformation", "Misinformation Clarification"),
            ("recipes", "Recipe Showcase"),
            ("help", "?"),
        ];
        let tooltips = [
            ("chat", "Ask about food, or upload a photo of your ingredients or meal."),
            ("meal_plan", MEAL_PLAN_TOOLTIP),
            ("misinformation", "Check a diet or nutrition claim you have heard."),
            ("recipes", "Browse cooking ideas that fit your dietary preferences."),
            ("help", "Show a short description of each menu item."),
        ];
        let steps = [
            ("suggestions", "Tap a suggestion to fill in the message box, then edit it or send it as is."),
            ("upload", "Use the camera button to attach a photo of your fridge, ingredients or a dish."),
            ("menu", "The menu icons open meal plans, myth checks and recipes. Hover over one for a hint."),
            ("input", "Or just type your own question and press send."),
        ];
        UiContent {
            suggestions: DEFAULT_SUGGESTIONS.iter().map(|s| s.to_string()).collect(),
            menu: menu.iter().map(|(k, l)| MenuItem { key: k.to_string(), label: l.to_string() }).collect(),
            tooltips: tooltips.iter().map(|(k, t)| (k.to_string(), t.to_string())).collect(),
            walkthrough_steps: steps
                .iter()
                .map(|(e, c)| WalkthroughStep { element: e.to_string(), caption: c.to_string() })
                .collect(),
        }
    }
}

impl UiContent {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Internal(format!("{}: {e}", path.display())))?;
        let content: UiContent = toml::from_str(&text).map_err(|e| GatewayError::Internal(e.to_string()))?;
        content.validate()?;
        Ok(content)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.suggestions.iter().all(|s| s.trim().is_empty()) {
            return Err(GatewayError::Internal("ui content needs at least one suggestion".into()));
        }
        if let Some(m) = self.menu.iter().find(|m| !self.tooltips.contains_key(&m.key)) {
            return Err(GatewayError::Internal(format!("menu item {} has no tooltip", m.key)));
        }
        Ok(())
    }
}

/// What the client renders for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiConfig {
    pub suggestions: Vec<String>,
    pub menu: Vec<MenuItem>,
    pub tooltips: BTreeMap<String, String>,
    pub walkthrough_steps: Vec<WalkthroughStep>,
    pub persona_display: PersonaDisplay,
    /// False until the session finishes or skips the walkthrough.
    pub walkthrough_done: bool,
    pub max_image_bytes: u64,
    pub accepted_image_types: Vec<String>,
}

pub fn persona_display(condition: Condition) -> PersonaDisplay {
    // The baseline cell is a bot-profile cell, so it shows the bot identity.
    let p = PersonaTemplate::for_profile(condition.profile());
    PersonaDisplay { display_name: p.display_name, avatar_key: p.avatar_key }
}

pub fn ui_config(content: &UiContent, condition: Condition, walkthrough_done: bool, max_image_bytes: u64) -> UiConfig {
    UiConfig {
        suggestions: content.suggestions.clone(),
        menu: content.menu.clone(),
        tooltips: content.tooltips.clone(),
        walkthrough_steps: content.walkthrough_steps.clone(),
        persona_display: persona_display(condition),
        walkthrough_done,
        max_image_bytes,
        accepted_image_types: vec!["image/jpeg".into(), "image/png".into()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BOT_DISPLAY_NAME, PET_DISPLAY_NAME};
    use crate::domain::Profile;

    #[test]
    fn default_content_is_valid() {
        let c = UiContent::default();
        c.validate().unwrap();
        assert_eq!(c.suggestions.len(), 4);
        assert_eq!(c.tooltips["meal_plan"], MEAL_PLAN_TOOLTIP);
        assert_eq!(c.walkthrough_steps[0].element, "suggestions");
    }

    #[test]
    fn display_follows_profile() {
        for c in Condition::ALL {
            let d = persona_display(c);
            let expected = match c.profile() {
                Profile::Pet => PET_DISPLAY_NAME,
                Profile::Bot => BOT_DISPLAY_NAME,
            };
            assert_eq!(d.display_name, expected);
        }
    }

    #[test]
    fn content_round_trips_through_toml() {
        let c = UiContent::default();
        let text = toml::to_string(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ui.toml");
        std::fs::write(&p, text).unwrap();
        assert_eq!(UiContent::load(&p).unwrap(), c);
    }
}
