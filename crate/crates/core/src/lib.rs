//! Experimentation platform for a multimodal diet-assistant chatbot: model
//! backends, conversation storage, the chat gateway, the between-subjects
//! experiment machinery, offline evaluation, statistics, and the
//! instruction-tuning data pipeline.

pub mod backends;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod domain;
pub mod seed;
pub mod stats;
pub mod eval;
pub mod experiment;
pub mod gateway;
pub mod jsonl;
pub mod store;
