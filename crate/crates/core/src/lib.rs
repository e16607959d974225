//! Accessible, wizard-based prompt building for text-to-image models.
//!
//! A prompt is built in five steps (environment, subjects, actions, scene,
//! style). At every step the user can type, pick one of the suggestions a
//! language model produced from a few-shot template, or skip. The crate
//! provides the templates, completion parsing, a cancellable model client
//! with record/replay fixtures, the suggestion engine, the wizard state
//! machine with effort accounting, session storage, an HTTP API and a CLI.

pub mod clock;
mod fsutil;
pub mod llm;
pub mod parser;
pub mod templates;
pub mod wizard;
pub mod suggest;
pub mod config;
pub mod persistence;
pub mod api;
pub mod cli;
