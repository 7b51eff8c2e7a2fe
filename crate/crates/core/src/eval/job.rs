use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{
    build_report, run_batch, BatchConfig, BatchImage, EvalError, EvalItem, EvalReport, FoodLexicon, Metric,
    OverlapMode, ReferenceSource, ValidationRecord, DEFAULT_THRESHOLD,
};
use crate::backends::{ChatBackend, TurnImage};
use crate::dataset::DEFAULT_QUESTION;
use crate::domain::MediaType;
use crate::jsonl;

/// A batch evaluation described on disk. Relative paths resolve against
/// the job file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalJob {
    /// Directory of .jpg/.png files, or a JSON-lines manifest of
    /// `{key, media_type, data}` with base64 data.
    pub images: PathBuf,
    /// Empty means the single default question.
    #[serde(default)]
    pub prompts: Vec<String>,
    /// JSON object mapping image key to expected food terms. When absent
    /// the reference backend answers each turn instead.
    #[serde(default)]
    pub references: Option<PathBuf>,
    /// JSON-lines rubric scores from human coders.
    #[serde(default)]
    pub validation: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub mode: OverlapMode,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_concurrency() -> usize {
    8
}

#[derive(Debug, Deserialize)]
struct ManifestLine {
    key: String,
    media_type: String,
    data: String,
}

/// Items plus the summary report of one job run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutput {
    pub report: EvalReport,
    pub items: Vec<EvalItem>,
}

impl EvalJob {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)?;
        let mut job: EvalJob = toml::from_str(&text).map_err(|e| EvalError::Invalid(e.to_string()))?;
        if let Some(dir) = path.parent() {
            job.rebase(dir);
        }
        Ok(job)
    }

    pub fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.images);
        for p in [&mut self.references, &mut self.validation].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        if self.prompts.is_empty() {
            vec![DEFAULT_QUESTION.to_owned()]
        } else {
            self.prompts.clone()
        }
    }

    pub fn batch_config(&self) -> BatchConfig {
        BatchConfig { mode: self.mode, threshold: self.threshold, concurrency: self.concurrency, ..Default::default() }
    }

    /// Runs the batch against `candidate` and builds the report.
    /// `reference_backend` is only consulted when no curated references are
    /// configured.
    pub async fn run(
        &self,
        candidate: &dyn ChatBackend,
        reference_backend: &dyn ChatBackend,
        lexicon: &FoodLexicon,
    ) -> Result<JobOutput, EvalError> {
        let images = load_images(&self.images)?;
        let curated = self.references.as_deref().map(load_references).transpose()?;
        let reference = match &curated {
            Some(map) => ReferenceSource::Curated(map),
            None => ReferenceSource::Backend(reference_backend),
        };
        let mut items =
            run_batch(&self.prompts(), &images, candidate, reference, lexicon, &self.batch_config()).await;
        let records = self.validation.as_deref().map(load_validation).transpose()?;
        let report = build_report(&mut items, self.threshold, records.as_deref(), self.metric)?;
        Ok(JobOutput { report, items })
    }
}

/// Images from a directory (sorted by file name, key = file name) or a
/// JSON-lines manifest.
pub fn load_images(path: &Path) -> Result<Vec<BatchImage>, EvalError> {
    if path.is_dir() {
        let mut out = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            let Some(media_type) = p.extension().and_then(|e| e.to_str()).and_then(MediaType::from_extension) else {
                continue;
            };
            let key = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            out.push(BatchImage { key, image: TurnImage::new(std::fs::read(&p)?, media_type) });
        }
        return Ok(out);
    }
    let lines: Vec<ManifestLine> = jsonl::read(path)?;
    let b64 = base64::engine::general_purpose::STANDARD;
    lines
        .into_iter()
        .map(|l| {
            let media_type = MediaType::from_mime(&l.media_type)
                .ok_or_else(|| EvalError::Invalid(format!("{}: unsupported media type {}", l.key, l.media_type)))?;
            let bytes = b64.decode(&l.data).map_err(|e| EvalError::Invalid(format!("{}: {e}", l.key)))?;
            Ok(BatchImage { key: l.key, image: TurnImage::new(bytes, media_type) })
        })
        .collect()
}

pub fn load_references(path: &Path) -> Result<BTreeMap<String, BTreeSet<String>>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| EvalError::Invalid(format!("{}: {e}", path.display())))
}

pub fn load_validation(path: &Path) -> Result<Vec<ValidationRecord>, EvalError> {
    Ok(jsonl::read(path)?)
}
