//! `purrfessor` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AppConfig, ConfigError, ADMIN_TOKEN_ENV};
use crate::dataset::{
    annotate_images, export_json, ingest, read_examples, review, write_examples, DatasetError, FixtureSearchClient,
    ReviewDecision, DEFAULT_QUERIES,
};
use crate::domain::{from_millis, now_millis, BackendId};
use crate::eval::{load_images, EvalError, EvalJob, FoodLexicon};
use crate::experiment::{ExperimentError, ParticipantRecord, StudyConfig};
use crate::gateway::{participant_records, AppState, GatewayError, SystemClock};
use crate::jsonl::{self, JsonlError};
use crate::store::{ConversationStore, StoreError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// Output was written but some items failed.
    #[error("{0}")]
    Partial(String),
}

#[derive(Debug, Parser)]
#[command(name = "purrfessor", version, about = "Diet-chatbot experimentation platform")]
pub struct Cli {
    /// Application config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Offline model validation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Study questionnaire statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Instruction-tuning data pipeline.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the HTTP gateway.
    Serve {
        /// Overrides the config port.
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score a batch of image prompts and print the report as JSON.
    Run {
        /// Job file (TOML).
        #[arg(long)]
        job: PathBuf,
        #[arg(long, default_value = "llava_finetuned")]
        candidate: BackendId,
        /// Answers the same prompts when the job has no curated references.
        #[arg(long, default_value = "gpt4_api")]
        reference: BackendId,
        /// Also write every scored item (JSON lines).
        #[arg(long)]
        items: Option<PathBuf>,
        /// Print a plain-text table instead of JSON.
        #[arg(long)]
        table: bool,
    },
}

#[derive(Debug, Args)]
pub struct ParticipantSource {
    /// Participant records (JSON lines). When omitted, sessions and
    /// questionnaires are read from the configured store.
    #[arg(long)]
    pub participants: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Mean, SD and Cronbach's alpha per scale.
    Scales {
        #[command(flatten)]
        source: ParticipantSource,
    },
    /// OLS of each outcome on condition dummies and covariates.
    Regression {
        #[command(flatten)]
        source: ParticipantSource,
        #[arg(long)]
        outcome: Option<String>,
        /// Drop participants who failed the manipulation check.
        #[arg(long)]
        passed_only: bool,
        /// Write the design matrix (CSV) for one outcome here.
        #[arg(long, requires = "outcome")]
        design_csv: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Collect image metadata from a search source.
    Ingest {
        /// Directory with metadata.jsonl and images/.
        #[arg(long)]
        fixtures: PathBuf,
        /// Search query; repeatable. The built-in list when omitted.
        #[arg(long = "query")]
        queries: Vec<String>,
        #[arg(long, default_value_t = 50)]
        limit: usize,
        /// Collection date for hits that carry none (YYYY-MM-DD). Today when omitted.
        #[arg(long)]
        today: Option<NaiveDate>,
    },
    /// Draft captions and structured Q&A for images; all start pending.
    Annotate {
        /// Image directory or JSON-lines manifest.
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value = "gpt4_api")]
        backend: BackendId,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
    },
    /// Apply reviewer decisions to pending examples.
    Review {
        #[arg(long)]
        examples: PathBuf,
        /// JSON lines: `{id, reviewer, decision, at?, ...}`.
        #[arg(long)]
        decisions: PathBuf,
    },
    /// Approved and edited examples in the training format.
    Export {
        #[arg(long)]
        examples: PathBuf,
    },
}

/// One line of a review decisions file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionLine {
    pub id: String,
    pub reviewer: String,
    /// Epoch milliseconds; now when absent.
    #[serde(default)]
    pub at: Option<i64>,
    #[serde(flatten)]
    pub decision: ReviewDecision,
}

fn load_config(cli: &Cli) -> Result<AppConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut text = text.to_owned();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn study(cfg: &AppConfig) -> Result<StudyConfig, CliError> {
    Ok(match &cfg.study {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::shipped(),
    })
}

fn lexicon(cfg: &AppConfig) -> Result<FoodLexicon, CliError> {
    Ok(match &cfg.lexicon {
        Some(p) => FoodLexicon::load(p)?,
        None => FoodLexicon::shipped(),
    })
}

fn records(cfg: &AppConfig, source: &ParticipantSource) -> Result<Vec<ParticipantRecord>, CliError> {
    match &source.participants {
        Some(p) => Ok(jsonl::read(p)?),
        None => {
            let store = ConversationStore::open(cfg.store_config())?;
            Ok(participant_records(&store)?)
        }
    }
}

/// Runs one command to completion.
pub async fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Eval(EvalCommand::Run { job, candidate, reference, items, table }) => {
            let job = EvalJob::load(job)?;
            let registry = cfg.registry()?;
            let candidate = registry.get(*candidate).map_err(EvalError::from)?;
            let reference = registry.get(*reference).map_err(EvalError::from)?;
            let output = job.run(candidate.as_ref(), reference.as_ref(), &lexicon(&cfg)?).await?;
            if let Some(path) = items {
                jsonl::write(path, &output.items)?;
            }
            let text =
                if *table { output.report.to_table() } else { serde_json::to_string_pretty(&output.report)? };
            emit(out, &text)?;
            let errored = output.report.triage.errored;
            if errored > 0 {
                return Err(CliError::Partial(format!("{errored} item(s) failed; see the item errors")));
            }
        }
        Command::Stats(StatsCommand::Scales { source }) => {
            let report = study(&cfg)?.scales_report(&records(&cfg, source)?)?;
            emit(out, &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Stats(StatsCommand::Regression { source, outcome, passed_only, design_csv }) => {
            let study = study(&cfg)?;
            let records = records(&cfg, source)?;
            let report = study.regression_report(&records, outcome.as_deref(), *passed_only)?;
            if let (Some(path), Some(outcome)) = (design_csv, outcome) {
                let (scored, _) = study.score_all(&records)?;
                let design = crate::experiment::build_design_matrix(&study.design_spec(outcome)?, &scored)?;
                std::fs::write(path, design.to_csv())?;
            }
            emit(out, &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Dataset(cmd) => dataset(&cfg, cmd, out).await?,
        Command::Serve { port } => {
            let port = port.unwrap_or(cfg.gateway.port);
            let admin = std::env::var(ADMIN_TOKEN_ENV).ok();
            if admin.is_none() {
                tracing::warn!("{ADMIN_TOKEN_ENV} is not set; admin endpoints and condition overrides are disabled");
            }
            let state = Arc::new(AppState::from_config(&cfg, admin, Arc::new(SystemClock))?);
            let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
            tracing::info!(addr = %listener.local_addr()?, "gateway listening");
            crate::gateway::serve(state, listener, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        }
    }
    Ok(())
}

async fn dataset(cfg: &AppConfig, cmd: &DatasetCommand, out: Option<&Path>) -> Result<(), CliError> {
    match cmd {
        DatasetCommand::Ingest { fixtures, queries, limit, today } => {
            let client = FixtureSearchClient::open(fixtures)?;
            let queries: Vec<&str> = if queries.is_empty() {
                DEFAULT_QUERIES.to_vec()
            } else {
                queries.iter().map(String::as_str).collect()
            };
            let today = today.unwrap_or_else(|| now_millis().date_naive());
            let report = ingest(&client, &queries, *limit, today);
            emit(out, &jsonl::to_string(&report.records))?;
            eprintln!(
                "{} records, {} duplicates, {} malformed urls, {} failed queries",
                report.records.len(),
                report.duplicates,
                report.malformed,
                report.failures.len()
            );
            if !report.failures.is_empty() {
                let names: Vec<&str> = report.failures.iter().map(|(q, _)| q.as_str()).collect();
                return Err(CliError::Partial(format!("queries failed: {}", names.join(", "))));
            }
        }
        DatasetCommand::Annotate { images, backend, concurrency } => {
            let images: Vec<_> = load_images(images)?.into_iter().map(|b| (b.key, b.image)).collect();
            let backend = cfg.registry()?.get(*backend).map_err(DatasetError::from)?;
            let results = annotate_images(&images, backend.as_ref(), *concurrency).await;
            let mut examples = Vec::new();
            let mut failed = Vec::new();
            for ((key, _), r) in images.iter().zip(results) {
                match r {
                    Ok(e) => examples.push(e),
                    Err(e) => {
                        eprintln!("{key}: {e}");
                        failed.push(key.as_str());
                    }
                }
            }
            emit(out, &jsonl::to_string(&examples))?;
            if !failed.is_empty() {
                return Err(CliError::Partial(format!("{} image(s) could not be annotated", failed.len())));
            }
        }
        DatasetCommand::Review { examples, decisions } => {
            let mut examples = read_examples(examples)?;
            let lines: Vec<DecisionLine> = jsonl::read(decisions)?;
            for line in lines {
                let ex = examples
                    .iter_mut()
                    .find(|e| e.id == line.id)
                    .ok_or_else(|| DatasetError::Invalid(format!("no example with id {}", line.id)))?;
                let at: DateTime<Utc> = line.at.map(from_millis).unwrap_or_else(now_millis);
                *ex = review(ex, line.decision, &line.reviewer, at)?;
            }
            match out {
                Some(p) => write_examples(p, &examples)?,
                None => emit(None, &jsonl::to_string(&examples))?,
            }
        }
        DatasetCommand::Export { examples } => {
            emit(out, &export_json(&read_examples(examples)?)?)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["purrfessor", "stats", "scales", "--seed", "3", "--out", "x.json"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.out.as_deref(), Some(Path::new("x.json")));
        assert!(Cli::try_parse_from(["purrfessor", "eval", "run", "--job", "j", "--candidate", "gpt5"]).is_err());
    }
}
