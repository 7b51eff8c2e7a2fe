use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, PersonaTemplate};
use crate::domain::{MediaType, MessageRole};

/// Image bytes attached to a user turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnImage {
    pub bytes: Arc<[u8]>,
    pub media_type: MediaType,
}

impl TurnImage {
    pub fn new(bytes: impl Into<Arc<[u8]>>, media_type: MediaType) -> Self {
        TurnImage { bytes: bytes.into(), media_type }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatTurn {
    pub role: MessageRole,
    pub text: String,
    /// At most one image, user turns only.
    pub image: Option<TurnImage>,
}

impl ChatTurn {
    pub fn user(text: impl Into<String>) -> Self {
        ChatTurn { role: MessageRole::User, text: text.into(), image: None }
    }

    pub fn user_with_image(text: impl Into<String>, image: TurnImage) -> Self {
        ChatTurn { role: MessageRole::User, text: text.into(), image: Some(image) }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatTurn { role: MessageRole::Assistant, text: text.into(), image: None }
    }
}

/// Stand-in for image content inside a prompt document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImagePlaceholder {
    pub sha256: String,
    pub media_type: MediaType,
}

impl ImagePlaceholder {
    pub fn marker(&self) -> String {
        format!("<image sha256={} type={}>", self.sha256, self.media_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptBlock {
    pub role: MessageRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImagePlaceholder>,
}

/// Provider-neutral prompt: the persona's system block followed by the
/// conversation turns in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptDocument {
    pub blocks: Vec<PromptBlock>,
}

impl PromptDocument {
    pub fn system(&self) -> &PromptBlock {
        &self.blocks[0]
    }

    pub fn turns(&self) -> &[PromptBlock] {
        &self.blocks[1..]
    }

    pub fn last_user(&self) -> Option<&PromptBlock> {
        self.blocks.iter().rev().find(|b| b.role == MessageRole::User)
    }

    /// Canonical plain-text rendering; image turns show their marker line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let role = match block.role {
                MessageRole::System => "system",
                MessageRole::User => "user",
                MessageRole::Assistant => "assistant",
            };
            out.push('[');
            out.push_str(role);
            out.push_str("]\n");
            if let Some(img) = &block.image {
                out.push_str(&img.marker());
                out.push('\n');
            }
            out.push_str(&block.text);
        }
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

pub fn render_prompt(persona: &PersonaTemplate, history: &[ChatTurn]) -> Result<PromptDocument, BackendError> {
    if history.is_empty() {
        return Err(BackendError::EmptyHistory);
    }
    let mut blocks = Vec::with_capacity(history.len() + 1);
    blocks.push(PromptBlock { role: MessageRole::System, text: persona.system_prompt.clone(), image: None });
    blocks.extend(history.iter().map(|turn| PromptBlock {
        role: turn.role,
        text: turn.text.clone(),
        image: turn
            .image
            .as_ref()
            .map(|img| ImagePlaceholder { sha256: img.sha256(), media_type: img.media_type }),
    }));
    Ok(PromptDocument { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_block_is_persona_system_prompt() {
        let doc = render_prompt(&PersonaTemplate::pet(), &[ChatTurn::user("hi")]).unwrap();
        assert_eq!(doc.blocks[0].role, MessageRole::System);
        assert_eq!(doc.blocks[0].text, PersonaTemplate::pet().system_prompt);
    }

    #[test]
    fn personas_differ_only_in_system_block() {
        let history = [ChatTurn::user("What can I cook with eggs?")];
        let pet = render_prompt(&PersonaTemplate::pet(), &history).unwrap();
        let bot = render_prompt(&PersonaTemplate::bot(), &history).unwrap();
        assert_ne!(pet.blocks[0], bot.blocks[0]);
        assert_eq!(pet.turns(), bot.turns());
    }

    #[test]
    fn turns_keep_their_order() {
        let img = TurnImage::new(vec![1u8, 2, 3], MediaType::Png);
        let history = vec![
            ChatTurn::user_with_image("what is this?", img.clone()),
            ChatTurn::assistant("A salad."),
            ChatTurn::user("recipe please"),
        ];
        let doc = render_prompt(&PersonaTemplate::bot(), &history).unwrap();
        let expected = PromptDocument {
            blocks: vec![
                PromptBlock {
                    role: MessageRole::System,
                    text: PersonaTemplate::bot().system_prompt,
                    image: None,
                },
                PromptBlock {
                    role: MessageRole::User,
                    text: "what is this?".into(),
                    image: Some(ImagePlaceholder { sha256: img.sha256(), media_type: MediaType::Png }),
                },
                PromptBlock { role: MessageRole::Assistant, text: "A salad.".into(), image: None },
                PromptBlock { role: MessageRole::User, text: "recipe please".into(), image: None },
            ],
        };
        assert_eq!(doc, expected);
        assert!(doc.to_text().contains("<image sha256="));
    }

    #[test]
    fn empty_history_is_rejected() {
        assert!(matches!(render_prompt(&PersonaTemplate::bot(), &[]), Err(BackendError::EmptyHistory)));
    }
}
