//! Measurement harness for the generation-verification gap: sample
//! generations, score them with a self-verification mechanism, reweight,
//! and report how much the verifier improves the generator. Runs live in
//! append-only directories so every step is resumable and every report is
//! reproducible from the stored records.

pub mod backend;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod templates;

pub use error::{Error, Result};
