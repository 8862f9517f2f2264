//! Shared helpers for integration tests: synthetic task and config builders.

use std::path::Path;

use gaplab::config::{Config, TaskConfig};
use gaplab_core::TaskSpec;

/// Task spec for the synthetic family with the embedded templates.
pub fn synthetic_task() -> TaskSpec {
    gaplab::templates::build_task(&synthetic_task_config(), Vec::new()).expect("synthetic task")
}

pub fn synthetic_task_config() -> TaskConfig {
    let toml = r#"
        kind = "synthetic"
        name = "synthetic-test"
    "#;
    toml::from_str(toml).expect("task config")
}

/// Config for an in-process synthetic run; sampling and verification are
/// adjusted per test through the returned value.
pub fn synthetic_config(spec_path: &Path, n_generations: u32, seed: u64) -> Config {
    let toml = format!(
        r#"
        [task]
        kind = "synthetic"
        name = "synthetic-test"

        [backend]
        kind = "synthetic"
        model = "synth-base"
        synthetic_spec = "{}"

        [sampling]
        n_generations = {n_generations}
        seed = {seed}
    "#,
        spec_path.display()
    );
    let cfg: Config = toml::from_str(&toml).expect("config");
    cfg.validate().expect("valid config");
    cfg
}
