use std::collections::{BTreeMap, BTreeSet};

use futures::StreamExt;

use super::{extract_food_terms, EvalError, EvalItem, FoodLexicon, OverlapMode, DEFAULT_THRESHOLD};
use crate::backends::{complete_text, ChatBackend, ChatRequest, ChatTurn, PersonaTemplate, TurnImage};

#[derive(Debug, Clone)]
pub struct BatchImage {
    pub key: String,
    pub image: TurnImage,
}

/// Where each item's reference term set comes from.
pub enum ReferenceSource<'a> {
    /// Expected terms per image key.
    Curated(&'a BTreeMap<String, BTreeSet<String>>),
    /// Terms extracted from a reference model's answer to the same turn.
    Backend(&'a dyn ChatBackend),
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub mode: OverlapMode,
    pub threshold: f64,
    pub concurrency: usize,
    pub persona: PersonaTemplate,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            mode: OverlapMode::Recall,
            threshold: DEFAULT_THRESHOLD,
            concurrency: 8,
            persona: PersonaTemplate::pet(),
        }
    }
}

/// One item per (image, prompt) pair, image-major. A failure on one item
/// is recorded on that item and the batch continues.
pub async fn run_batch(
    prompts: &[String],
    images: &[BatchImage],
    backend: &dyn ChatBackend,
    reference: ReferenceSource<'_>,
    lexicon: &FoodLexicon,
    config: &BatchConfig,
) -> Vec<EvalItem> {
    // Owned items keep the per-item futures free of borrowed arguments,
    // which lets callers hold this future across a Send boundary.
    let pairs: Vec<(BatchImage, usize, String)> = images
        .iter()
        .flat_map(|img| prompts.iter().enumerate().map(move |(i, p)| (img.clone(), i, p.clone())))
        .collect();
    let reference = &reference;
    futures::stream::iter(pairs)
        .map(|(img, pi, prompt)| async move {
            let img = &img;
            let mut item = EvalItem {
                id: format!("{}#{}", img.key, pi),
                image_ref: Some(img.key.clone()),
                prompt,
                response: String::new(),
                reference_terms: BTreeSet::new(),
                candidate_terms: BTreeSet::new(),
                overlap: None,
                flagged: false,
                error: None,
                edge_case_label: None,
            };
            if let Err(e) = fill_item(&mut item, img, backend, reference, lexicon, config).await {
                tracing::warn!(item = %item.id, error = %e, "eval item failed");
                item.error = Some(e.to_string());
                item.overlap = None;
                item.flagged = false;
            }
            item
        })
        .buffered(config.concurrency.max(1))
        .collect()
        .await
}

async fn fill_item(
    item: &mut EvalItem,
    img: &BatchImage,
    backend: &dyn ChatBackend,
    reference: &ReferenceSource<'_>,
    lexicon: &FoodLexicon,
    config: &BatchConfig,
) -> Result<(), EvalError> {
    let request =
        ChatRequest::new(vec![ChatTurn::user_with_image(item.prompt.clone(), img.image.clone())], config.persona.clone());
    item.response = complete_text(backend, &request).await?.text;
    item.candidate_terms = extract_food_terms(&item.response, lexicon);
    item.reference_terms = match reference {
        ReferenceSource::Curated(map) => map
            .get(&img.key)
            .cloned()
            .ok_or_else(|| EvalError::Invalid(format!("no reference terms for image {}", img.key)))?,
        ReferenceSource::Backend(reference_backend) => {
            let text = complete_text(*reference_backend, &request).await?.text;
            extract_food_terms(&text, lexicon)
        }
    };
    item.score(config.mode, config.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;
    use crate::domain::MediaType;

    fn images(n: u8) -> Vec<BatchImage> {
        (0..n)
            .map(|i| BatchImage { key: format!("img{i}.jpg"), image: TurnImage::new(vec![i; 12], MediaType::Jpeg) })
            .collect()
    }

    fn prompts() -> Vec<String> {
        vec!["What food is in this image?".into(), "Suggest a low-fat recipe.".into()]
    }

    fn curated(images: &[BatchImage]) -> BTreeMap<String, BTreeSet<String>> {
        images.iter().map(|i| (i.key.clone(), ["carrot".to_owned(), "egg".to_owned()].into())).collect()
    }

    #[tokio::test]
    async fn cardinality_and_determinism() {
        let imgs = images(3);
        let refs = curated(&imgs);
        let lex = FoodLexicon::shipped();
        let cfg = BatchConfig::default();
        let run = || async {
            run_batch(&prompts(), &imgs, &MockBackend::new(9), ReferenceSource::Curated(&refs), &lex, &cfg).await
        };
        let a = run().await;
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|i| i.overlap.is_some()));
        assert_eq!(a[1].id, "img0.jpg#1");
        assert_eq!(a, run().await);
    }

    #[tokio::test]
    async fn one_failure_does_not_abort() {
        let imgs = images(3);
        let refs = curated(&imgs);
        // The marker line is followed by the prompt, so this pins one pair.
        let trigger = format!("{} type=image/jpeg>\n{}", imgs[2].image.sha256(), prompts()[1]);
        let mock = MockBackend::new(9).with_fault(trigger);
        let lex = FoodLexicon::shipped();
        let items =
            run_batch(&prompts(), &imgs, &mock, ReferenceSource::Curated(&refs), &lex, &BatchConfig::default()).await;
        let errored: Vec<_> = items.iter().filter(|i| i.is_errored()).map(|i| i.id.as_str()).collect();
        assert_eq!(errored, ["img2.jpg#1"]);
        assert_eq!(items.iter().filter(|i| i.overlap.is_some()).count(), 5);
    }

    #[tokio::test]
    async fn model_reference() {
        let imgs = images(2);
        let lex = FoodLexicon::shipped();
        let reference = MockBackend::new(9);
        let items =
            run_batch(&prompts(), &imgs, &MockBackend::new(9), ReferenceSource::Backend(&reference), &lex, &BatchConfig::default())
                .await;
        // Same model on both sides agrees with itself.
        assert!(items.iter().all(|i| i.overlap == Some(1.0)));
    }
}
