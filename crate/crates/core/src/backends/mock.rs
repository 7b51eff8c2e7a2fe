//! Deterministic stand-in for the remote models.
//!
//! Replies are a pure function of the rendered prompt document and the seed.
//! A script can pin replies to specific images (by SHA-256) or exact user
//! texts; everything else comes from a small built-in corpus covering
//! ingredient identification, structured recipe answers and the non-food
//! disclaimer.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatChunk, ChatRequest, ChunkStream, PromptDocument};
use crate::dataset::{render_annotation, render_model_turn, Recipe, StructuredQA, ANNOTATION_MARKER};
use crate::domain::{BackendId, FinishReason};

pub const NON_FOOD_DISCLAIMER: &str = "This image does not appear to contain food.";

const INGREDIENTS: &[(&str, &str)] = &[
    ("carrot", "carrot is rich in beta-carotene, which the body converts to vitamin A"),
    ("spinach", "spinach provides iron, folate and vitamin K"),
    ("tomato", "tomato supplies vitamin C and the antioxidant lycopene"),
    ("broccoli", "broccoli is high in fiber and vitamin C"),
    ("egg", "egg is an affordable source of complete protein"),
    ("chicken", "chicken breast is a lean source of protein"),
    ("salmon", "salmon is rich in omega-3 fatty acids"),
    ("rice", "brown rice adds whole-grain carbohydrates and fiber"),
    ("pasta", "whole-wheat pasta gives lasting energy from complex carbohydrates"),
    ("lettuce", "lettuce is hydrating and very low in calories"),
    ("avocado", "avocado provides heart-healthy monounsaturated fat"),
    ("bell pepper", "bell pepper is one of the best sources of vitamin C"),
    ("onion", "onion contributes flavor plus prebiotic fiber"),
    ("potato", "potato offers potassium and vitamin B6"),
    ("tofu", "tofu is a plant protein with calcium"),
    ("mushroom", "mushroom adds B vitamins and savory flavor with few calories"),
    ("zucchini", "zucchini is light, hydrating and rich in vitamin C"),
    ("cucumber", "cucumber is mostly water and very refreshing"),
    ("yogurt", "yogurt provides protein, calcium and probiotics"),
    ("banana", "banana is a good source of potassium"),
    ("apple", "apple offers fiber and vitamin C"),
    ("shrimp", "shrimp is high in protein and low in fat"),
    ("bean", "bean dishes add plant protein and plenty of fiber"),
    ("oat", "oat is a whole grain with soluble fiber"),
];

const DISHES: [&str; 4] = ["Stir-Fry", "Salad", "Grain Bowl", "Soup"];

const METHODS: [&str; 4] = [
    "Heat a little olive oil in a pan and cook everything for 6 to 8 minutes, stirring often.",
    "Chop everything into bite-sized pieces and toss together in a large bowl.",
    "Arrange everything over cooked whole grains and drizzle with a light dressing.",
    "Simmer everything in low-sodium broth for 15 minutes until tender.",
];

const GREETINGS: [&str; 3] = [
    "Great question!",
    "Thanks for sharing!",
    "Happy to help with that!",
];

const CLOSINGS: [&str; 3] = [
    "Let me know if you would like more ideas!",
    "Feel free to ask a follow-up question anytime.",
    "Want another recipe or a nutrition breakdown? Just ask.",
];

const GENERIC: [&str; 3] = [
    "I'm happy to help with healthy eating. Ask me for recipes or nutrition facts, or share a photo of your fridge or meal.",
    "I can suggest balanced meals, explain nutrition labels, or identify ingredients in a photo. What would you like to try?",
    "Tell me what ingredients you have, or upload a picture, and I'll suggest something healthy to cook.",
];

const MEAL_KEYWORDS: [&str; 5] = ["meal", "recipe", "cook", "dinner", "lunch"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Reply { reply: String },
    NonFood { non_food: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ScriptLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(flatten)]
    entry: ScriptEntry,
}

/// Pinned replies keyed by image digest or exact user text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockScript {
    by_image: HashMap<String, ScriptEntry>,
    by_text: HashMap<String, String>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply_for_image(&mut self, sha256: impl Into<String>, reply: impl Into<String>) {
        self.by_image.insert(sha256.into(), ScriptEntry::Reply { reply: reply.into() });
    }

    pub fn non_food_image(&mut self, sha256: impl Into<String>) {
        self.by_image.insert(sha256.into(), ScriptEntry::NonFood { non_food: true });
    }

    pub fn reply_for_text(&mut self, text: &str, reply: impl Into<String>) {
        self.by_text.insert(normalize(text), reply.into());
    }

    pub fn len(&self) -> usize {
        self.by_image.len() + self.by_text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// JSON-lines; each line is `{"image_sha256"|"text": .., "reply": ..}`
    /// or `{"image_sha256": .., "non_food": true}`.
    pub fn parse_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut script = MockScript::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: ScriptLine = serde_json::from_str(line)?;
            match (parsed.image_sha256, parsed.text, parsed.entry) {
                (Some(sha), _, entry) => {
                    script.by_image.insert(sha, entry);
                }
                (None, Some(text), ScriptEntry::Reply { reply }) => script.reply_for_text(&text, reply),
                _ => {
                    return Err(serde::de::Error::custom(
                        "script line needs image_sha256, or text with a reply",
                    ))
                }
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_jsonl(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Fault {
    trigger: String,
    after_chunks: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    latency: Duration,
    chunk_delay: Duration,
    chunk_chars: usize,
    vision: bool,
    script: MockScript,
    faults: Vec<Fault>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend {
            seed,
            latency: Duration::ZERO,
            chunk_delay: Duration::ZERO,
            chunk_chars: 16,
            vision: true,
            script: MockScript::default(),
            faults: Vec::new(),
        }
    }

    /// Delay before the first chunk.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_chunk_delay(mut self, delay: Duration) -> Self {
        self.chunk_delay = delay;
        self
    }

    pub fn with_chunk_chars(mut self, chars: usize) -> Self {
        self.chunk_chars = chars.max(1);
        self
    }

    pub fn with_vision(mut self, vision: bool) -> Self {
        self.vision = vision;
        self
    }

    pub fn with_script(mut self, script: MockScript) -> Self {
        self.script = script;
        self
    }

    /// Requests whose rendered prompt contains `trigger` fail with a 500.
    pub fn with_fault(mut self, trigger: impl Into<String>) -> Self {
        self.faults.push(Fault { trigger: trigger.into(), after_chunks: None });
        self
    }

    /// Like [`with_fault`](Self::with_fault) but the stream breaks after
    /// `after_chunks` content chunks.
    pub fn with_midstream_fault(mut self, trigger: impl Into<String>, after_chunks: usize) -> Self {
        self.faults.push(Fault { trigger: trigger.into(), after_chunks: Some(after_chunks) });
        self
    }

    fn pick(&self, doc: &PromptDocument, salt: &str, n: usize) -> usize {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(salt.as_bytes());
        h.update(doc.digest());
        let d = h.finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&d[..8]);
        (u64::from_le_bytes(b) % n as u64) as usize
    }

    fn pick_ingredients(&self, doc: &PromptDocument, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        let mut salt = 0usize;
        while out.len() < count {
            let i = self.pick(doc, &format!("ingredient{salt}"), INGREDIENTS.len());
            if !out.contains(&i) {
                out.push(i);
            }
            salt += 1;
        }
        out
    }

    fn structured(&self, doc: &PromptDocument, ingredients: &[usize]) -> StructuredQA {
        let names: Vec<&str> = ingredients.iter().map(|i| INGREDIENTS[*i].0).collect();
        let facts: Vec<&str> = ingredients.iter().map(|i| INGREDIENTS[*i].1).collect();
        let dish = self.pick(doc, "dish", DISHES.len());
        let title = format!(
            "{} {}",
            names.iter().take(2).map(|n| capitalize(n)).collect::<Vec<_>>().join(" and "),
            DISHES[dish]
        );
        StructuredQA {
            greeting: GREETINGS[self.pick(doc, "greeting", GREETINGS.len())].to_owned(),
            nutrition_info: format!("Nutrition notes: {}.", facts.join("; ")),
            recipes: vec![Recipe {
                title,
                steps: vec![
                    format!("Wash and prepare the {}.", join_names(&names)),
                    METHODS[dish].to_owned(),
                    "Season lightly with herbs, lemon or a pinch of salt, then serve.".to_owned(),
                ],
            }],
            closing: CLOSINGS[self.pick(doc, "closing", CLOSINGS.len())].to_owned(),
        }
    }

    fn non_food_structured(&self, doc: &PromptDocument) -> (String, StructuredQA) {
        (
            "An image without any visible food items.".to_owned(),
            StructuredQA {
                greeting: GREETINGS[self.pick(doc, "greeting", GREETINGS.len())].to_owned(),
                nutrition_info: format!(
                    "{NON_FOOD_DISCLAIMER} It shows everyday objects rather than ingredients or meals."
                ),
                recipes: Vec::new(),
                closing: "Share a photo of your ingredients or meal and I'll suggest a healthy recipe.".to_owned(),
            },
        )
    }

    /// The full reply text for a prompt document.
    pub fn reply(&self, doc: &PromptDocument) -> String {
        let Some(last) = doc.last_user() else {
            return GENERIC[self.pick(doc, "generic", GENERIC.len())].to_owned();
        };
        let scripted = last.image.as_ref().and_then(|img| self.script.by_image.get(&img.sha256));
        let annotation = last.text.contains(ANNOTATION_MARKER);

        match scripted {
            Some(ScriptEntry::Reply { reply }) => return reply.clone(),
            Some(ScriptEntry::NonFood { .. }) if annotation => {
                let (caption, qa) = self.non_food_structured(doc);
                return render_annotation(&caption, &qa);
            }
            Some(ScriptEntry::NonFood { .. }) => {
                return format!(
                    "{NON_FOOD_DISCLAIMER} It seems to show everyday objects. Feel free to share a photo of \
                     your meal or ingredients and I'll help from there."
                )
            }
            None => {}
        }
        if let Some(reply) = self.script.by_text.get(&normalize(&last.text)) {
            return reply.clone();
        }

        if annotation {
            let picked = self.pick_ingredients(doc, 3);
            let names: Vec<&str> = picked.iter().map(|i| INGREDIENTS[*i].0).collect();
            let caption = format!("A photo showing {}.", join_names(&names));
            return render_annotation(&caption, &self.structured(doc, &picked));
        }

        if last.image.is_some() {
            let picked = self.pick_ingredients(doc, 3);
            let names: Vec<&str> = picked.iter().map(|i| INGREDIENTS[*i].0).collect();
            return format!(
                "In this photo I can see {}.\n\n{}",
                join_names(&names),
                render_model_turn(&self.structured(doc, &picked))
            );
        }

        let lower = last.text.to_lowercase();
        let mut mentioned: Vec<(usize, usize)> = INGREDIENTS
            .iter()
            .enumerate()
            .filter_map(|(i, (name, _))| lower.find(name).map(|pos| (pos, i)))
            .collect();
        mentioned.sort_unstable();
        let mentioned: Vec<usize> = mentioned.into_iter().map(|(_, i)| i).take(3).collect();
        if !mentioned.is_empty() {
            return render_model_turn(&self.structured(doc, &mentioned));
        }
        if MEAL_KEYWORDS.iter().any(|k| lower.contains(k)) {
            let picked = self.pick_ingredients(doc, 2);
            return render_model_turn(&self.structured(doc, &picked));
        }
        GENERIC[self.pick(doc, "generic", GENERIC.len())].to_owned()
    }

    /// The exact chunk sequence the mock streams for `request`.
    pub fn chunks(&self, request: &ChatRequest) -> Result<Vec<ChatChunk>, BackendError> {
        let doc = request.prompt()?;
        let text = doc.to_text();
        let fault = self.faults.iter().find(|f| text.contains(&f.trigger));
        if let Some(Fault { after_chunks: None, .. }) = fault {
            return Err(BackendError::Upstream { status: 500, body: "injected fault".into() });
        }

        let reply = self.reply(&doc);
        let (reply, finish) = truncate_words(&reply, request.max_tokens as usize);
        let mut chunks: Vec<ChatChunk> = split_chars(&reply, self.chunk_chars).into_iter().map(ChatChunk::delta).collect();
        if let Some(Fault { after_chunks: Some(n), .. }) = fault {
            chunks.truncate(*n);
            return Ok(chunks);
        }
        chunks.push(ChatChunk::finish(finish));
        Ok(chunks)
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    fn id(&self) -> BackendId {
        BackendId::Mock
    }

    fn supports_vision(&self) -> bool {
        self.vision
    }

    async fn open_stream(&self, request: &ChatRequest) -> Result<ChunkStream, BackendError> {
        let chunks = self.chunks(request)?;
        let broken = chunks.last().is_none_or(|c| !c.is_final);
        let (latency, gap) = (self.latency, self.chunk_delay);
        let items = chunks.into_iter().map(Ok).chain(
            broken.then(|| Err(BackendError::Upstream { status: 502, body: "injected fault mid-stream".into() })),
        );
        let stream = stream::iter(items.enumerate()).then(move |(i, item)| async move {
            let wait = if i == 0 { latency } else { gap };
            if !wait.is_zero() {
                tokio::time::sleep(wait).await;
            }
            item
        });
        Ok(stream.boxed())
    }
}

fn normalize(text: &str) -> String {
    text.trim().to_lowercase()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn join_names(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Approximates tokens by whitespace-separated words.
fn truncate_words(text: &str, max_tokens: usize) -> (String, FinishReason) {
    let mut words = 0;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() && idx > 0 && !text[..idx].ends_with(char::is_whitespace) {
            words += 1;
            if words == max_tokens {
                return (text[..idx].to_owned(), FinishReason::Length);
            }
        }
    }
    (text.to_owned(), FinishReason::Stop)
}

fn split_chars(text: &str, size: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    chars.chunks(size).map(|c| c.iter().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{complete_text, ChatTurn, PersonaTemplate, TurnImage};
    use crate::domain::MediaType;

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new(vec![ChatTurn::user(text)], PersonaTemplate::pet())
    }

    #[tokio::test]
    async fn carrot_prompt_mentions_carrot() {
        let out = complete_text(&MockBackend::new(1), &req("I have a carrot, what now?")).await.unwrap();
        assert!(out.text.contains("carrot"));
    }

    #[test]
    fn identical_inputs_give_identical_chunks() {
        let a = MockBackend::new(9).chunks(&req("What healthy meals can I cook?")).unwrap();
        let b = MockBackend::new(9).chunks(&req("What healthy meals can I cook?")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|c| c.is_final).count(), 1);
    }

    #[tokio::test]
    async fn stream_equals_non_streaming_reply() {
        let mock = MockBackend::new(3).with_chunk_chars(5);
        let request = req("Any ideas for salmon and rice?");
        let doc = request.prompt().unwrap();
        let streamed = complete_text(&mock, &request).await.unwrap();
        assert_eq!(streamed.text, mock.reply(&doc));
    }

    #[tokio::test]
    async fn latency_beyond_timeout_is_a_timeout() {
        let mock = MockBackend::new(0).with_latency(Duration::from_millis(50));
        let request = req("hello").with_timeout_ms(1);
        assert_eq!(complete_text(&mock, &request).await, Err(BackendError::Timeout { timeout_ms: 1 }));
    }

    #[tokio::test]
    async fn max_tokens_truncates_with_length_reason() {
        let request = req("What healthy meals can I cook?").with_max_tokens(5);
        let out = complete_text(&MockBackend::new(0), &request).await.unwrap();
        assert_eq!(out.finish_reason, FinishReason::Length);
        assert_eq!(out.text.split_whitespace().count(), 5);
    }

    #[tokio::test]
    async fn scripted_non_food_image_gets_disclaimer() {
        let img = TurnImage::new(vec![9u8; 4], MediaType::Png);
        let mut script = MockScript::new();
        script.non_food_image(img.sha256());
        let mock = MockBackend::new(0).with_script(script);
        let request =
            ChatRequest::new(vec![ChatTurn::user_with_image("what is this?", img)], PersonaTemplate::bot());
        let out = complete_text(&mock, &request).await.unwrap();
        assert!(out.text.starts_with(NON_FOOD_DISCLAIMER));
    }

    #[tokio::test]
    async fn faults_fail_the_request() {
        let mock = MockBackend::new(0).with_fault("[[boom]]");
        assert!(matches!(
            complete_text(&mock, &req("please [[boom]]")).await,
            Err(BackendError::Upstream { status: 500, .. })
        ));
        let mid = MockBackend::new(0).with_midstream_fault("[[cut]]", 2).with_chunk_chars(3);
        assert!(matches!(
            complete_text(&mid, &req("recipe with egg [[cut]]")).await,
            Err(BackendError::Upstream { status: 502, .. })
        ));
    }

    #[test]
    fn script_jsonl_parses() {
        let s = MockScript::parse_jsonl(
            "{\"image_sha256\":\"ab\",\"reply\":\"x\"}\n{\"image_sha256\":\"cd\",\"non_food\":true}\n{\"text\":\"Hi\",\"reply\":\"yo\"}\n",
        )
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.by_text.get("hi").map(String::as_str), Some("yo"));
        assert!(MockScript::parse_jsonl("{\"reply\":\"orphan\"}").is_err());
    }

    #[test]
    fn truncation_counts_words() {
        assert_eq!(truncate_words("a b c d", 2), ("a b".to_owned(), FinishReason::Length));
        assert_eq!(truncate_words("a b", 5), ("a b".to_owned(), FinishReason::Stop));
    }
}
