//! Shared vocabulary of the platform: conversations, messages, personas,
//! experimental conditions and participants.
//!
//! Every type here is an immutable value object with a canonical JSON form:
//! snake_case field names, enums as lowercase strings, timestamps as RFC 3339
//! UTC strings with millisecond precision.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("invalid condition: profile {profile} cannot be combined with model {model}")]
    InvalidCondition { profile: Profile, model: ModelKind },
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("cannot parse {kind} from {value:?}")]
    Parse { kind: &'static str, value: String },
}

/// Current UTC time truncated to whole milliseconds.
pub fn now_millis() -> DateTime<Utc> {
    from_millis(Utc::now().timestamp_millis())
}

pub fn from_millis(ms: i64) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ms)
        .single()
        .expect("millisecond timestamp in chrono range")
}

/// Serde adapter writing timestamps as `2024-05-01T12:00:00.000Z`.
pub mod millis_ts {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        let parsed = DateTime::parse_from_rfc3339(&raw).map_err(serde::de::Error::custom)?;
        Ok(super::from_millis(parsed.timestamp_millis()))
    }
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            /// Fresh random identifier.
            pub fn random() -> Self {
                Self(uuid::Uuid::new_v4().to_string())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_type!(MessageId);
id_type!(ConversationId);
id_type!(SessionId);
id_type!(ParticipantId);
id_type!(ImageId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    User,
    Assistant,
    /// Never shown to participants.
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Bot,
    Pet,
}

impl Profile {
    pub const ALL: [Profile; 2] = [Profile::Bot, Profile::Pet];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Bot => "bot",
            Profile::Pet => "pet",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bot" => Ok(Profile::Bot),
            "pet" => Ok(Profile::Pet),
            _ => Err(DomainError::Parse { kind: "profile", value: s.to_owned() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gpt4,
    LlavaRaw,
    LlavaFinetuned,
    /// ChatGPT-only baseline; valid with the bot profile only.
    BaselineChatgpt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Gpt4,
        ModelKind::LlavaRaw,
        ModelKind::LlavaFinetuned,
        ModelKind::BaselineChatgpt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gpt4 => "gpt4",
            ModelKind::LlavaRaw => "llava_raw",
            ModelKind::LlavaFinetuned => "llava_finetuned",
            ModelKind::BaselineChatgpt => "baseline_chatgpt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| DomainError::Parse { kind: "model", value: s.to_owned() })
    }
}

/// Identity of a chat-completion service the gateway can dispatch to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendId {
    Gpt4Api,
    LlavaRaw,
    LlavaFinetuned,
    Mock,
}

impl BackendId {
    pub const ALL: [BackendId; 4] =
        [BackendId::Gpt4Api, BackendId::LlavaRaw, BackendId::LlavaFinetuned, BackendId::Mock];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendId::Gpt4Api => "gpt4_api",
            BackendId::LlavaRaw => "llava_raw",
            BackendId::LlavaFinetuned => "llava_finetuned",
            BackendId::Mock => "mock",
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendId::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| DomainError::Parse { kind: "backend", value: s.to_owned() })
    }
}

/// One cell of the between-subjects design.
///
/// Only the seven members of [`Condition::ALL`] can be constructed; the
/// pet profile is never paired with the ChatGPT-only baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawCondition", into = "RawCondition")]
pub struct Condition {
    profile: Profile,
    model: ModelKind,
}

#[derive(Serialize, Deserialize)]
struct RawCondition {
    profile: Profile,
    model: ModelKind,
}

impl TryFrom<RawCondition> for Condition {
    type Error = DomainError;

    fn try_from(raw: RawCondition) -> Result<Self, Self::Error> {
        validate_condition(raw.profile, raw.model)
    }
}

impl From<Condition> for RawCondition {
    fn from(c: Condition) -> Self {
        RawCondition { profile: c.profile, model: c.model }
    }
}

impl Condition {
    /// The valid condition space in canonical order. Design-matrix dummy
    /// columns follow this order.
    pub const ALL: [Condition; 7] = [
        Condition { profile: Profile::Bot, model: ModelKind::Gpt4 },
        Condition { profile: Profile::Bot, model: ModelKind::LlavaRaw },
        Condition { profile: Profile::Bot, model: ModelKind::LlavaFinetuned },
        Condition { profile: Profile::Pet, model: ModelKind::Gpt4 },
        Condition { profile: Profile::Pet, model: ModelKind::LlavaRaw },
        Condition { profile: Profile::Pet, model: ModelKind::LlavaFinetuned },
        Condition { profile: Profile::Bot, model: ModelKind::BaselineChatgpt },
    ];

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    /// Position in [`Condition::ALL`].
    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|c| c == self).expect("constructed conditions are valid")
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.profile, self.model)
    }
}

impl FromStr for Condition {
    type Err = DomainError;

    /// Accepts `profile:model` or `profile/model`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (p, m) = s
            .split_once([':', '/'])
            .ok_or_else(|| DomainError::Parse { kind: "condition", value: s.to_owned() })?;
        validate_condition(p.trim().parse()?, m.trim().parse()?)
    }
}

pub fn validate_condition(profile: Profile, model: ModelKind) -> Result<Condition, DomainError> {
    if profile == Profile::Pet && model == ModelKind::BaselineChatgpt {
        return Err(DomainError::InvalidCondition { profile, model });
    }
    Ok(Condition { profile, model })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MediaType {
    #[serde(rename = "image/jpeg")]
    Jpeg,
    #[serde(rename = "image/png")]
    Png,
}

impl MediaType {
    pub fn mime(self) -> &'static str {
        match self {
            MediaType::Jpeg => "image/jpeg",
            MediaType::Png => "image/png",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MediaType::Jpeg => "jpg",
            MediaType::Png => "png",
        }
    }

    pub fn from_mime(mime: &str) -> Option<Self> {
        match mime.trim().to_ascii_lowercase().as_str() {
            "image/jpeg" | "image/jpg" => Some(MediaType::Jpeg),
            "image/png" => Some(MediaType::Png),
            _ => None,
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "jpg" | "jpeg" => Some(MediaType::Jpeg),
            "png" => Some(MediaType::Png),
            _ => None,
        }
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mime())
    }
}

/// Reference to an uploaded image held in the blob store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: ImageId,
    pub storage_key: String,
    pub media_type: MediaType,
    pub byte_size: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub conversation_id: ConversationId,
    pub role: MessageRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<ImageRef>,
    #[serde(with = "millis_ts")]
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<BackendId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
}

impl Message {
    pub fn user(
        conversation_id: ConversationId,
        text: impl Into<String>,
        image_ref: Option<ImageRef>,
    ) -> Self {
        Message {
            id: MessageId::random(),
            conversation_id,
            role: MessageRole::User,
            text: text.into(),
            image_ref,
            created_at: now_millis(),
            backend_id: None,
            latency_ms: None,
            finish_reason: None,
        }
    }

    pub fn assistant(
        conversation_id: ConversationId,
        text: impl Into<String>,
        backend_id: BackendId,
        latency_ms: u64,
        finish_reason: FinishReason,
    ) -> Self {
        Message {
            id: MessageId::random(),
            conversation_id,
            role: MessageRole::Assistant,
            text: text.into(),
            image_ref: None,
            created_at: now_millis(),
            backend_id: Some(backend_id),
            latency_ms: Some(latency_ms),
            finish_reason: Some(finish_reason),
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.text.trim().is_empty() && self.image_ref.is_none() {
            return Err(DomainError::InvalidMessage("text is empty and no image is attached".into()));
        }
        if self.image_ref.is_some() && self.role != MessageRole::User {
            return Err(DomainError::InvalidMessage("only user messages may carry an image".into()));
        }
        match (self.role, self.backend_id) {
            (MessageRole::Assistant, None) => {
                Err(DomainError::InvalidMessage("assistant message without backend_id".into()))
            }
            (MessageRole::User | MessageRole::System, Some(_)) => Err(DomainError::InvalidMessage(
                "backend_id is only allowed on assistant messages".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A message as persisted, with its per-conversation sequence number.
/// Sequence numbers are the ordering authority, not timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredMessage {
    pub seq: u64,
    #[serde(flatten)]
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: ConversationId,
    pub session_id: SessionId,
    pub condition: Condition,
    #[serde(with = "millis_ts")]
    pub created_at: DateTime<Utc>,
    pub messages: Vec<StoredMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: ParticipantId,
    pub assigned_condition: Condition,
    /// Covariate name to coded numeric value, per the registered codebook.
    #[serde(default)]
    pub demographics: BTreeMap<String, f64>,
    /// Predisposition scale means (ai_efficacy, ai_anxiety, ...).
    #[serde(default)]
    pub predispositions: BTreeMap<String, f64>,
    #[serde(with = "millis_ts")]
    pub consent_at: DateTime<Utc>,
}

/// Labeling vocabulary for hard inputs, assigned by human reviewers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCaseLabel {
    AmbiguousFood,
    NonFood,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bot_gpt4_is_valid() {
        let c = validate_condition(Profile::Bot, ModelKind::Gpt4).unwrap();
        assert_eq!(c.profile(), Profile::Bot);
        assert_eq!(c.model(), ModelKind::Gpt4);
    }

    #[test]
    fn pet_baseline_is_rejected() {
        assert_eq!(
            validate_condition(Profile::Pet, ModelKind::BaselineChatgpt),
            Err(DomainError::InvalidCondition {
                profile: Profile::Pet,
                model: ModelKind::BaselineChatgpt
            })
        );
    }

    #[test]
    fn brute_force_condition_space_has_seven_cells() {
        let mut valid = Vec::new();
        for p in Profile::ALL {
            for m in ModelKind::ALL {
                if let Ok(c) = validate_condition(p, m) {
                    valid.push(c);
                }
            }
        }
        assert_eq!(valid.len(), 7);
        for c in &valid {
            assert!(Condition::ALL.contains(c));
        }
    }

    #[test]
    fn condition_json_round_trip_is_exact() {
        for c in Condition::ALL {
            let json = serde_json::to_string(&c).unwrap();
            let back: Condition = serde_json::from_str(&json).unwrap();
            assert_eq!(back, c);
            assert_eq!(serde_json::to_string(&back).unwrap(), json);
        }
        let bad = r#"{"profile":"pet","model":"baseline_chatgpt"}"#;
        assert!(serde_json::from_str::<Condition>(bad).is_err());
        assert_eq!(
            serde_json::to_string(&Condition::ALL[5]).unwrap(),
            r#"{"profile":"pet","model":"llava_finetuned"}"#
        );
    }

    #[test]
    fn condition_parses_from_text() {
        let c: Condition = "pet:llava_finetuned".parse().unwrap();
        assert_eq!(c, Condition::ALL[5]);
        assert_eq!("bot/gpt4".parse::<Condition>().unwrap(), Condition::ALL[0]);
        assert!("pet:baseline_chatgpt".parse::<Condition>().is_err());
        assert!("cat:gpt4".parse::<Condition>().is_err());
    }

    #[test]
    fn message_invariants() {
        let conv = ConversationId::from("c1");
        assert!(Message::user(conv.clone(), "", None).validate().is_err());
        assert!(Message::user(conv.clone(), "hi", None).validate().is_ok());
        let mut m = Message::assistant(conv.clone(), "ok", BackendId::Mock, 3, FinishReason::Stop);
        assert!(m.validate().is_ok());
        m.backend_id = None;
        assert!(m.validate().is_err());
        let mut u = Message::user(conv, "hi", None);
        u.backend_id = Some(BackendId::Mock);
        assert!(u.validate().is_err());
    }

    #[test]
    fn timestamps_serialize_with_millis() {
        let mut m = Message::user(ConversationId::from("c"), "x", None);
        m.created_at = from_millis(1_700_000_000_123);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["created_at"], "2023-11-14T22:13:20.123Z");
        assert_eq!(json["role"], "user");
        assert!(json.get("backend_id").is_none());
        let back: Message = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
    }
}
