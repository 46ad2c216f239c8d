//! Subcommand implementations. Each `run` function takes a validated
//! [`ExperimentConfig`] and returns a summary of what it wrote, so the same
//! code drives the binary and the tests.

pub mod explain;
pub mod grid;
pub mod patterns;
pub mod selftest;
pub mod synth;
pub mod train;

use std::path::Path;

use dtd_core::network::io::load_model;
use dtd_core::patterns::io::load_patterns;
use dtd_core::{add_gaussian_noise, Dataset, Mlp, NoiseConfig, PatternSet, Rule};

use crate::config::{ExperimentConfig, TargetChoice};
use crate::error::{CliError, Result};

pub const IMAGE_SIDE: usize = 28;

pub(crate) fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))
}

pub fn load_train_set(cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = Dataset::load(&cfg.train_images, &cfg.train_labels)?;
    Ok(match cfg.train_limit {
        Some(n) => data.take(n),
        None => data,
    })
}

pub fn load_test_set(cfg: &ExperimentConfig) -> Result<Dataset> {
    Ok(Dataset::load(&cfg.test_images, &cfg.test_labels)?)
}

/// Training images as seen by the model of arm `sigma`.
pub fn training_data(cfg: &ExperimentConfig, clean: &Dataset, sigma: f64) -> Result<Dataset> {
    let level = cfg.training_sigma(sigma);
    Ok(add_gaussian_noise(
        clean,
        NoiseConfig {
            sigma: level,
            seed: cfg.seed_for("train-noise", level),
        },
    )?)
}

/// Test images explained at noise level `sigma`.
pub fn test_data(cfg: &ExperimentConfig, clean: &Dataset, sigma: f64) -> Result<Dataset> {
    Ok(add_gaussian_noise(
        clean,
        NoiseConfig {
            sigma,
            seed: cfg.seed_for("test-noise", sigma),
        },
    )?)
}

pub fn require_model(cfg: &ExperimentConfig, sigma: f64) -> Result<Mlp> {
    let path = cfg.model_path(sigma);
    exists_or_missing(&path, "dtd train")?;
    Ok(load_model(&path)?)
}

/// Pattern file for arm `sigma`, checked against `mlp`. Only loaded when some
/// rule in `rules` needs it.
pub fn require_patterns(
    cfg: &ExperimentConfig,
    sigma: f64,
    mlp: &Mlp,
    rules: &[Rule],
) -> Result<Option<PatternSet>> {
    if !rules.iter().any(|r| r.needs_patterns()) {
        return Ok(None);
    }
    let path = cfg.patterns_path(sigma);
    exists_or_missing(&path, "dtd patterns")?;
    let set = load_patterns(&path)?;
    set.check_source(mlp, None)?;
    Ok(Some(set))
}

pub fn resolve_target(
    choice: TargetChoice,
    explicit: Option<usize>,
    mlp: &Mlp,
    data: &Dataset,
    index: usize,
) -> Result<usize> {
    if let Some(t) = explicit {
        return Ok(t);
    }
    Ok(match choice {
        TargetChoice::Label => data.label(index) as usize,
        TargetChoice::Predicted => {
            let logits = mlp.forward(data.image(index))?;
            let mut best = 0;
            for (i, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = i;
                }
            }
            best
        }
    })
}

pub fn check_index(data: &Dataset, index: usize) -> Result<()> {
    if index >= data.len() {
        return Err(dtd_core::Error::IndexOutOfRange {
            index,
            len: data.len(),
        }
        .into());
    }
    Ok(())
}

/// Index of the digit shown in the noise sweep.
pub fn sweep_index(cfg: &ExperimentConfig, test: &Dataset) -> Result<usize> {
    match cfg.sweep_index {
        Some(i) => {
            check_index(test, i)?;
            Ok(i)
        }
        None => test
            .first_of_class(4)
            .ok_or_else(|| CliError::Usage("test set has no digit 4; set sweep_index".into())),
    }
}

/// Rule names are used in file names; `+` becomes `plus`.
pub fn file_stem(rule: Rule) -> String {
    rule.name().replace('+', "plus")
}

pub(crate) fn exists_or_missing(path: &Path, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            hint,
        })
    }
}
