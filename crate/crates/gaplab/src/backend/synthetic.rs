//! In-process programmable model: deterministic generations and confusion-
//! matrix verdicts driven by a JSON model spec.

use std::collections::BTreeMap;
use std::path::Path;

use gaplab_core::synth::{
    synthetic_compare, synthetic_generate, synthetic_update, synthetic_verify, SyntheticModelSpec,
};
use gaplab_core::types::{
    Generation, Mechanism, PromptInstance, SamplingConfig, VerificationRecord,
};
use gaplab_core::verify::PairWinner;

use crate::error::{Error, Result};

/// Large odd constant decorrelating repeated verifier samples of the same
/// generation.
const SAMPLE_STRIDE: u64 = 0x9e37_79b9_7f4a_7c15;

pub struct SyntheticModel {
    pub spec: SyntheticModelSpec,
    pub model_id: String,
    /// Base seed mixed into every generate/verify/compare call.
    pub run_seed: u64,
}

impl SyntheticModel {
    pub fn new(spec: SyntheticModelSpec, model_id: String, run_seed: u64) -> Result<SyntheticModel> {
        spec.validate()?;
        Ok(SyntheticModel {
            spec,
            model_id,
            run_seed,
        })
    }

    pub fn load(path: &Path, model_id: String, run_seed: u64) -> Result<SyntheticModel> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("read {}: {e}", path.display())))?;
        let spec: SyntheticModelSpec = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("parse {}: {e}", path.display())))?;
        SyntheticModel::new(spec, model_id, run_seed)
    }

    pub fn generate(
        &self,
        prompt: &PromptInstance,
        sampling: &SamplingConfig,
    ) -> Result<Vec<Generation>> {
        Ok(synthetic_generate(
            &self.spec,
            &prompt.prompt_id,
            sampling.n_generations,
            self.run_seed,
            sampling,
        )?)
    }

    pub fn verify(
        &self,
        generation: &Generation,
        mechanism: Mechanism,
        sample_idx: u32,
    ) -> Result<VerificationRecord> {
        let seed = self
            .run_seed
            .wrapping_add(u64::from(sample_idx).wrapping_mul(SAMPLE_STRIDE));
        Ok(synthetic_verify(&self.spec, generation, mechanism, seed)?)
    }

    pub fn compare(
        &self,
        prompt: &PromptInstance,
        a: &Generation,
        b: &Generation,
        nonce: u64,
    ) -> Result<(PairWinner, String, bool)> {
        Ok(synthetic_compare(
            &self.spec,
            &prompt.prompt_id,
            (a.gen_index, a.utility > 0.5),
            (b.gen_index, b.utility > 0.5),
            nonce,
            self.run_seed,
        )?)
    }

    /// Exact self-improvement step: the next round's model is the empirical
    /// distribution of kept answers per prompt.
    pub fn updated(&self, kept: &BTreeMap<String, Vec<String>>) -> SyntheticModelSpec {
        synthetic_update(&self.spec, kept)
    }

    /// True expected utility of the current model over `prompts` (mass on
    /// the correct answer, averaged).
    pub fn expected_accuracy(&self, prompt_ids: &[String]) -> Option<f64> {
        if prompt_ids.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for id in prompt_ids {
            total += self.spec.correct_mass(id)?;
        }
        Some(total / prompt_ids.len() as f64)
    }
}
