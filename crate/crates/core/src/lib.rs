//! Core math and domain types for studying verification-filtered generation.
//!
//! Everything in this crate is pure: sampled generations, verifier judgments,
//! weight functions, the gap estimators built on top of them, tournament
//! brackets, the 4x4 sudoku oracle, and a programmable synthetic model used
//! for desk-scale validation. IO, HTTP backends, run persistence, and the CLI
//! live in the companion `gaplab` crate.
//!
//! The crate is `no_std`-compatible (`--no-default-features --features libm`);
//! it allocates but never touches the filesystem or network.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("no_std builds require the `libm` feature for float math");

pub(crate) mod math;

pub mod gapmath;
pub mod sudoku;
pub mod synth;
pub mod tasks;
pub mod types;
pub mod verify;
pub mod weights;

pub use types::{
    Exemplar, Generation, Gold, MatchMode, MatchRule, Mechanism, PromptInstance, SamplingConfig,
    TaskSpec, VerificationRecord, WeightFunction,
};
