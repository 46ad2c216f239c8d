use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use dtd_core::network::io::save_model;
use dtd_core::network::{accuracy, train};
use dtd_core::{Init, Mlp};

use super::{ensure_out_dir, load_test_set, load_train_set, test_data, training_data};
use crate::config::{level_tag, ExperimentConfig};
use crate::error::Result;
use crate::render::write_text;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub sigma: f64,
    pub training_sigma: f64,
    pub model_path: PathBuf,
    pub final_loss: f64,
    pub train_accuracy: f64,
    /// Accuracy on the test images at the arm's own noise level.
    pub test_accuracy: f64,
    pub clean_test_accuracy: f64,
    pub seconds: f64,
}

pub const REPORT_NAME: &str = "train_report.txt";

/// Trains one network per level in `levels` and writes the metrics report.
/// Wall-clock time goes to the returned outcome only, so the report is
/// reproducible byte for byte.
pub fn run(cfg: &ExperimentConfig, levels: &[f64]) -> Result<Vec<TrainOutcome>> {
    ensure_out_dir(cfg)?;
    let clean_train = load_train_set(cfg)?;
    let clean_test = load_test_set(cfg)?;
    let mut outcomes = Vec::with_capacity(levels.len());
    for &sigma in levels {
        let started = Instant::now();
        let data = training_data(cfg, &clean_train, sigma)?;
        let tc = cfg.train_config(sigma);
        let init = Mlp::init(&[data.dim(), cfg.hidden, 10], Init::Glorot, tc.seed)?;
        let (mlp, history) = train(&init, &data, &tc)?;
        let model_path = cfg.model_path(sigma);
        save_model(&mlp, &model_path)?;
        let noisy_test = test_data(cfg, &clean_test, sigma)?;
        let last = history.last();
        outcomes.push(TrainOutcome {
            sigma,
            training_sigma: cfg.training_sigma(sigma),
            model_path,
            final_loss: last.map_or(f64::NAN, |h| h.loss),
            train_accuracy: last.map_or(f64::NAN, |h| h.accuracy),
            test_accuracy: accuracy(&mlp, &noisy_test)?,
            clean_test_accuracy: accuracy(&mlp, &clean_test)?,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    write_text(&cfg.out_dir.join(REPORT_NAME), &report(cfg, &outcomes))?;
    Ok(outcomes)
}

pub fn report(cfg: &ExperimentConfig, outcomes: &[TrainOutcome]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# hidden={} lr={} epochs={} batch={} master_seed={} train_on_noisy={}",
        cfg.hidden,
        cfg.learning_rate,
        cfg.epochs,
        cfg.batch_size,
        cfg.master_seed,
        cfg.train_on_noisy
    );
    let _ = writeln!(
        out,
        "{:<7} {:<9} {:>10} {:>10} {:>10} {:>10}",
        "sigma", "trained", "loss", "train_acc", "test_acc", "clean_acc"
    );
    for o in outcomes {
        let _ = writeln!(
            out,
            "{:<7} {:<9} {:>10.6} {:>10.4} {:>10.4} {:>10.4}",
            level_tag(o.sigma),
            level_tag(o.training_sigma),
            o.final_loss,
            o.train_accuracy,
            o.test_accuracy,
            o.clean_test_accuracy
        );
    }
    out
}
