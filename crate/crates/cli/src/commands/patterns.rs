use std::path::PathBuf;

use dtd_core::estimate_patterns;
use dtd_core::patterns::io::save_patterns;

use super::{ensure_out_dir, load_train_set, require_model, training_data};
use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct PatternOutcome {
    pub sigma: f64,
    pub path: PathBuf,
    pub samples: u64,
    pub degenerate: usize,
    pub neurons: usize,
}

/// Estimates patterns for each arm over the training images its model saw.
pub fn run(cfg: &ExperimentConfig, levels: &[f64]) -> Result<Vec<PatternOutcome>> {
    ensure_out_dir(cfg)?;
    let clean = load_train_set(cfg)?;
    let mut outcomes = Vec::with_capacity(levels.len());
    for &sigma in levels {
        let mlp = require_model(cfg, sigma)?;
        let data = training_data(cfg, &clean, sigma)?;
        let set = estimate_patterns(&mlp, &data)?;
        let path = cfg.patterns_path(sigma);
        save_patterns(&set, &path)?;
        outcomes.push(PatternOutcome {
            sigma,
            path,
            samples: data.len() as u64,
            degenerate: set.degenerate_count(),
            neurons: set.layers().iter().map(|l| l.fan_out()).sum(),
        });
    }
    Ok(outcomes)
}
