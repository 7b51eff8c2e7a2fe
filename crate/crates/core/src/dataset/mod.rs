//! Instruction-tuning data factory: image-metadata ingestion, structured
//! caption and Q&A generation, human review, and export.

mod export;
mod ingest;
mod review;
mod structured;

pub use export::{
    export_json, export_records, parse_export, parse_model_turn, render_model_turn, ConversationTurn,
    ExportRecord, IMAGE_TOKEN,
};
pub use ingest::{
    ingest, parse_url_date, FixtureSearchClient, ImageMeta, IngestReport, SearchClient, SearchHit, UrlDate,
    DEFAULT_QUERIES,
};
pub use review::{review, AnnotationContent, ReviewDecision, ReviewState, TrainingExample};
pub use structured::{
    annotation_prompt, parse_annotation, render_annotation, Recipe, StructuredQA, ANNOTATION_MARKER,
};

use std::path::Path;

use futures::StreamExt;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{complete_text, BackendError, ChatBackend, ChatRequest, ChatTurn, PersonaTemplate, TurnImage};
use crate::domain::EdgeCaseLabel;
use crate::jsonl::{self, JsonlError};

/// Question paired with each image in exported training conversations.
pub const DEFAULT_QUESTION: &str = "What healthy meals can I make with what you see in this image?";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("could not parse {section} section: {detail}")]
    Parse { section: String, detail: String },
    #[error("cannot {action} an example that is {from}")]
    InvalidTransition { from: ReviewState, action: &'static str },
    #[error("no approved or edited examples to export")]
    NothingToExport,
    #[error("search failed for query {query:?}: {message}")]
    Client { query: String, message: String },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

fn annotator_persona() -> PersonaTemplate {
    PersonaTemplate {
        id: "annotator".into(),
        system_prompt: "You write accurate, well-structured training examples for a healthy-eating chatbot. \
                        Follow the requested output layout exactly."
            .into(),
        opening_style: String::new(),
        closing_style: String::new(),
        display_name: "annotator".into(),
        avatar_key: String::new(),
    }
}

/// Asks a vision backend for a caption and structured Q&A for one image and
/// parses the reply. Parse failures are returned, never truncated away.
pub async fn generate_annotation(
    image: &TurnImage,
    backend: &dyn ChatBackend,
) -> Result<(String, StructuredQA), DatasetError> {
    let request = ChatRequest::new(
        vec![ChatTurn::user_with_image(annotation_prompt(), image.clone())],
        annotator_persona(),
    );
    let completion = complete_text(backend, &request).await?;
    parse_annotation(&completion.text)
}

/// Annotates every image with up to `concurrency` requests in flight,
/// producing pending examples in input order. Example ids derive from the
/// image bytes, so reruns are stable.
pub async fn annotate_images(
    images: &[(String, TurnImage)],
    backend: &dyn ChatBackend,
    concurrency: usize,
) -> Vec<Result<TrainingExample, DatasetError>> {
    futures::stream::iter(images)
        .map(|(key, image)| async move {
            let (caption, qa) = generate_annotation(image, backend).await?;
            let digest = hex::encode(Sha256::digest(&image.bytes));
            let edge_case_label = qa.is_non_food().then_some(EdgeCaseLabel::NonFood);
            Ok(TrainingExample::pending(format!("ex-{}", &digest[..16]), key.clone(), caption, qa, edge_case_label))
        })
        .buffered(concurrency.max(1))
        .collect()
        .await
}

pub fn read_examples(path: &Path) -> Result<Vec<TrainingExample>, DatasetError> {
    jsonl::read(path).map_err(DatasetError::from)
}

pub fn write_examples(path: &Path, examples: &[TrainingExample]) -> Result<(), DatasetError> {
    jsonl::write(path, examples).map_err(DatasetError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockBackend, MockScript};
    use crate::domain::MediaType;

    #[tokio::test]
    async fn mock_annotation_has_all_sections() {
        let img = TurnImage::new(vec![7u8; 16], MediaType::Jpeg);
        let (caption, qa) = generate_annotation(&img, &MockBackend::new(5)).await.unwrap();
        assert!(!caption.is_empty());
        assert!(!qa.greeting.is_empty() && !qa.nutrition_info.is_empty() && !qa.closing.is_empty());
        assert!(!qa.recipes.is_empty() && qa.recipes[0].steps.len() >= 2);
    }

    #[tokio::test]
    async fn missing_closing_surfaces_as_parse_error() {
        let img = TurnImage::new(vec![1u8; 8], MediaType::Png);
        let mut script = MockScript::new();
        script.reply_for_image(
            img.sha256(),
            "[CAPTION]\nx\n[GREETING]\nhi\n[NUTRITION]\nn\n[RECIPES]\nRecipe: A\n[STEPS]\n1. a\n2. b\n",
        );
        let mock = MockBackend::new(0).with_script(script);
        match generate_annotation(&img, &mock).await {
            Err(DatasetError::Parse { section, .. }) => assert_eq!(section, "closing"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn non_food_image_yields_factual_description() {
        let img = TurnImage::new(vec![3u8; 8], MediaType::Png);
        let mut script = MockScript::new();
        script.non_food_image(img.sha256());
        let mock = MockBackend::new(0).with_script(script);
        let (_, qa) = generate_annotation(&img, &mock).await.unwrap();
        assert!(qa.recipes.is_empty());
        assert!(qa.nutrition_info.contains("does not appear to contain food"));
    }

    #[tokio::test]
    async fn vision_is_required() {
        let img = TurnImage::new(vec![3u8; 8], MediaType::Png);
        let mock = MockBackend::new(0).with_vision(false);
        assert!(matches!(
            generate_annotation(&img, &mock).await,
            Err(DatasetError::Backend(BackendError::ImageUnsupported(_)))
        ));
    }
}
