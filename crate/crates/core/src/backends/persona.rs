use serde::{Deserialize, Serialize};

use crate::domain::{BackendId, ModelKind, Profile};

/// System prompt plus tone fragments that give the assistant its profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaTemplate {
    pub id: String,
    pub system_prompt: String,
    pub opening_style: String,
    pub closing_style: String,
    pub display_name: String,
    pub avatar_key: String,
}

pub const PET_DISPLAY_NAME: &str = "Purrfessor";
pub const PET_AVATAR: &str = "purrfessor-cat";
pub const BOT_DISPLAY_NAME: &str = "NutriBot";
pub const BOT_AVATAR: &str = "neutral-robot";

impl PersonaTemplate {
    /// The anthropomorphic cat persona. Replies open and close with warm,
    /// supportive sentences.
    pub fn pet() -> Self {
        let opening = "Hello, my friend! I'm so glad you stopped by.";
        let closing = "You're doing wonderfully, and I'm always here whenever you want more ideas. Take care!";
        PersonaTemplate {
            id: "pet".into(),
            system_prompt: format!(
                "You are {PET_DISPLAY_NAME}, a cat professor who wears glasses and a bowtie and loves \
                 helping people eat well. You are knowledgeable and a little playful. Identify foods and \
                 ingredients in photos the user shares, give nutrition facts, and suggest healthy recipes \
                 with clear step-by-step instructions. Start every reply with a caring, supportive sentence \
                 in the spirit of \"{opening}\" and finish every reply with an encouraging, caring sentence \
                 in the spirit of \"{closing}\". If a photo shows no food, say so plainly and describe what \
                 is visible instead of refusing."
            ),
            opening_style: opening.into(),
            closing_style: closing.into(),
            display_name: PET_DISPLAY_NAME.into(),
            avatar_key: PET_AVATAR.into(),
        }
    }

    /// Neutral assistant persona.
    pub fn bot() -> Self {
        PersonaTemplate {
            id: "bot".into(),
            system_prompt: "You are a dietary guidance assistant. Identify foods and ingredients in photos \
                            the user shares, give nutrition facts, and suggest healthy recipes with clear \
                            step-by-step instructions. Use a neutral, factual tone. If a photo shows no food, \
                            say so plainly and describe what is visible."
                .into(),
            opening_style: String::new(),
            closing_style: String::new(),
            display_name: BOT_DISPLAY_NAME.into(),
            avatar_key: BOT_AVATAR.into(),
        }
    }

    /// Plain general-purpose assistant used for the ChatGPT-only baseline.
    pub fn baseline() -> Self {
        PersonaTemplate {
            id: "baseline".into(),
            system_prompt: "You are a helpful assistant.".into(),
            opening_style: String::new(),
            closing_style: String::new(),
            display_name: BOT_DISPLAY_NAME.into(),
            avatar_key: BOT_AVATAR.into(),
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Pet => Self::pet(),
            Profile::Bot => Self::bot(),
        }
    }
}

/// Where a model kind is dispatched, and whether it replaces the profile persona.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub backend: BackendId,
    pub persona_override: Option<PersonaTemplate>,
}

pub fn route(model: ModelKind) -> Route {
    match model {
        ModelKind::Gpt4 => Route { backend: BackendId::Gpt4Api, persona_override: None },
        ModelKind::LlavaRaw => Route { backend: BackendId::LlavaRaw, persona_override: None },
        ModelKind::LlavaFinetuned => Route { backend: BackendId::LlavaFinetuned, persona_override: None },
        ModelKind::BaselineChatgpt => Route {
            backend: BackendId::Gpt4Api,
            persona_override: Some(PersonaTemplate::baseline()),
        },
    }
}
