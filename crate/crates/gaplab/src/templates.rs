//! Embedded prompt templates and task assembly from configuration.
//!
//! Each template ships inside the binary and can be overridden file by file
//! through `task.template_dir`; override files use the same names as the
//! entries in `templates/`.

use std::collections::BTreeMap;
use std::path::Path;

use gaplab_core::{Exemplar, MatchRule, Mechanism, TaskSpec};

use crate::config::{TaskConfig, TaskKind};
use crate::error::{Error, Result};

pub const GEN_MATH: &str = include_str!("../templates/gen_math.txt");
pub const GEN_SUDOKU: &str = include_str!("../templates/gen_sudoku.txt");
pub const VER_MC: &str = include_str!("../templates/ver_mc.txt");
pub const VER_COT_BINARY: &str = include_str!("../templates/ver_cot_binary.txt");
pub const VER_COT_SCORE: &str = include_str!("../templates/ver_cot_score.txt");
pub const VER_TOURNAMENT: &str = include_str!("../templates/ver_tournament.txt");
pub const VER_SUDOKU: &str = include_str!("../templates/ver_sudoku.txt");

/// Loads `name` from the override directory when present, otherwise returns
/// the embedded copy.
fn template(dir: Option<&Path>, name: &str, embedded: &str) -> Result<String> {
    if let Some(dir) = dir {
        let path = dir.join(name);
        if path.is_file() {
            return std::fs::read_to_string(&path)
                .map_err(|e| Error::config(format!("read template {}: {e}", path.display())));
        }
    }
    Ok(String::from(embedded))
}

/// Assembles the [`TaskSpec`] for a task family: templates, matching rule,
/// utility bounds, and few-shot exemplars.
///
/// The sudoku family carries verification templates only for the mechanisms
/// it defines prompts for (MC and the binary judgment); requesting any other
/// mechanism on sudoku fails at verification time with a missing-template
/// error.
pub fn build_task(cfg: &TaskConfig, few_shot: Vec<Exemplar>) -> Result<TaskSpec> {
    let dir = cfg.template_dir.as_deref();
    let mut ver_templates = BTreeMap::new();
    let (gen_template, match_rule) = match cfg.kind {
        TaskKind::Math | TaskKind::Synthetic | TaskKind::Trivia => {
            ver_templates.insert(Mechanism::Mc, template(dir, "ver_mc.txt", VER_MC)?);
            ver_templates.insert(
                Mechanism::CotBinary,
                template(dir, "ver_cot_binary.txt", VER_COT_BINARY)?,
            );
            ver_templates.insert(
                Mechanism::CotScore,
                template(dir, "ver_cot_score.txt", VER_COT_SCORE)?,
            );
            ver_templates.insert(
                Mechanism::Tournament,
                template(dir, "ver_tournament.txt", VER_TOURNAMENT)?,
            );
            let rule = match cfg.kind {
                TaskKind::Trivia => MatchRule::CandidateSet,
                _ => MatchRule::ExactTailAnswer,
            };
            (template(dir, "gen_math.txt", GEN_MATH)?, rule)
        }
        TaskKind::Sudoku => {
            let sudoku_ver = template(dir, "ver_sudoku.txt", VER_SUDOKU)?;
            ver_templates.insert(Mechanism::Mc, sudoku_ver.clone());
            ver_templates.insert(Mechanism::CotBinary, sudoku_ver);
            (template(dir, "gen_sudoku.txt", GEN_SUDOKU)?, MatchRule::Sudoku)
        }
    };
    let shots = cfg.shots.unwrap_or(few_shot.len());
    let task = TaskSpec {
        name: cfg.name.clone(),
        u_min: cfg.u_min,
        u_max: cfg.u_max,
        match_rule,
        match_mode: cfg.match_mode,
        answer_phrase: cfg.answer_phrase.clone(),
        gen_template,
        ver_templates,
        few_shot,
        shots,
    };
    task.validate()?;
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gaplab_core::MatchMode;

    fn cfg(kind: TaskKind) -> TaskConfig {
        TaskConfig {
            kind,
            name: String::from("demo"),
            split: String::from("test"),
            data: None,
            few_shot_data: None,
            shots: None,
            match_mode: MatchMode::Flexible,
            answer_phrase: String::from("The answer is"),
            template_dir: None,
            u_min: 0.0,
            u_max: 1.0,
        }
    }

    #[test]
    fn math_task_carries_all_four_mechanisms() {
        let task = build_task(&cfg(TaskKind::Math), Vec::new()).unwrap();
        assert_eq!(task.ver_templates.len(), 4);
        assert_eq!(task.match_rule, MatchRule::ExactTailAnswer);
        assert!(task.gen_template.contains("{problem}"));
    }

    #[test]
    fn sudoku_task_has_mc_and_binary_only() {
        let task = build_task(&cfg(TaskKind::Sudoku), Vec::new()).unwrap();
        assert_eq!(task.match_rule, MatchRule::Sudoku);
        assert!(task.ver_templates.contains_key(&Mechanism::Mc));
        assert!(task.ver_templates.contains_key(&Mechanism::CotBinary));
        assert!(!task.ver_templates.contains_key(&Mechanism::Tournament));
        assert!(!task.ver_templates.contains_key(&Mechanism::CotScore));
    }

    #[test]
    fn template_dir_overrides_file_by_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("gen_math.txt"), "Q: {problem}\nA:").unwrap();
        let mut c = cfg(TaskKind::Math);
        c.template_dir = Some(dir.path().to_path_buf());
        let task = build_task(&c, Vec::new()).unwrap();
        assert_eq!(task.gen_template, "Q: {problem}\nA:");
        // Untouched templates still come from the embedded set.
        assert_eq!(task.ver_templates[&Mechanism::Mc], VER_MC);
    }

    #[test]
    fn embedded_templates_validate() {
        for kind in [TaskKind::Math, TaskKind::Trivia, TaskKind::Sudoku, TaskKind::Synthetic] {
            build_task(&cfg(kind), Vec::new()).unwrap();
        }
    }

    #[test]
    fn shot_mismatch_is_rejected() {
        let mut c = cfg(TaskKind::Math);
        c.shots = Some(2);
        assert!(build_task(&c, Vec::new()).is_err());
    }
}
