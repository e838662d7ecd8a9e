//! Run configuration: one TOML file covering model, training, paths and
//! evaluation settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigil_core::dsp::attack::AttackKind;
use sigil_core::error::{Error, Result};
use sigil_core::model::ModelConfig;
use sigil_core::training::TrainConfig;

/// Environment variable holding the default config path.
pub const CONFIG_ENV: &str = "SIGIL_CONFIG";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Directory holding a synthesized corpus (`manifest.toml` + WAVs).
    pub dataset_dir: PathBuf,
    /// Where training writes checkpoints and metrics.
    pub run_dir: PathBuf,
    /// Where `eval` writes report files.
    pub report_dir: PathBuf,
    /// Messages embedded per utterance during evaluation.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Attack names evaluated by `eval` (CLI names); defaults to all eight.
    #[serde(default)]
    pub eval_attacks: Option<Vec<String>>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn default_trials() -> usize {
    10
}

impl RunConfig {
    /// Desk-scale defaults rooted at `base`.
    pub fn desk(base: &Path) -> Self {
        RunConfig {
            dataset_dir: base.join("corpus"),
            run_dir: base.join("run"),
            report_dir: base.join("reports"),
            trials: default_trials(),
            eval_attacks: None,
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Collects every invalid field at once, with field paths.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.model.validate() {
            problems.push(format!("model: {e}"));
        }
        if let Err(e) = self.train.validate() {
            problems.push(format!("train: {e}"));
        }
        if self.trials == 0 {
            problems.push("trials: must be at least 1".to_string());
        }
        for k in &self.train.attacks {
            if matches!(k, AttackKind::Resample { target_rate: Some(0) }) {
                problems.push("train.attacks: resample target_rate must be positive".into());
            }
        }
        if let Some(names) = &self.eval_attacks {
            for n in names {
                if n.parse::<AttackKind>().is_err() {
                    problems.push(format!("eval_attacks: unknown attack `{n}`"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Attack pool used by `eval`.
    pub fn eval_attack_pool(&self) -> Result<Vec<AttackKind>> {
        match &self.eval_attacks {
            None => Ok(AttackKind::all_defaults()),
            Some(names) => names.iter().map(|n| n.parse()).collect(),
        }
    }
}
