use std::path::PathBuf;

use dtd_core::{explain, Rule};

use super::{
    check_index, ensure_out_dir, load_test_set, require_model, require_patterns, resolve_target,
    sweep_index, test_data, IMAGE_SIDE,
};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::render::{compose_grid, render_heatmap, write_png, GridLayout, RgbImage};

/// Noise level of the digit grid.
pub const DIGIT_GRID_SIGMA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// One digit; rows are rules, columns are noise levels.
    NoiseSweep,
    /// Rows are digits, columns are rules, all at [`DIGIT_GRID_SIGMA`].
    Digits,
}

impl GridMode {
    pub fn file_name(self) -> &'static str {
        match self {
            GridMode::NoiseSweep => "fig1.png",
            GridMode::Digits => "fig2.png",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub mode: GridMode,
    pub path: PathBuf,
    pub layout: GridLayout,
    pub image: RgbImage,
    /// Largest conservation residual among the layer-wise cells.
    pub max_residual: f64,
}

fn rule_label(rule: Rule) -> String {
    match rule {
        Rule::Saliency => "SAL".into(),
        Rule::GradTimesInput => "GXI".into(),
        other => other.name().to_ascii_uppercase(),
    }
}

fn sigma_label(sigma: f64) -> String {
    format!("{sigma:.1}")
}

fn digit_indices(cfg: &ExperimentConfig, test: &dtd_core::Dataset) -> Result<Vec<usize>> {
    if !cfg.digit_indices.is_empty() {
        for &i in &cfg.digit_indices {
            check_index(test, i)?;
        }
        return Ok(cfg.digit_indices.clone());
    }
    (0..10u8)
        .map(|d| {
            test.first_of_class(d).ok_or_else(|| {
                CliError::Usage(format!("test set has no digit {d}; set digit_indices"))
            })
        })
        .collect()
}

struct Arm {
    sigma: f64,
    mlp: dtd_core::Mlp,
    patterns: Option<dtd_core::PatternSet>,
    data: dtd_core::Dataset,
}

fn arm(
    cfg: &ExperimentConfig,
    clean: &dtd_core::Dataset,
    sigma: f64,
    rules: &[Rule],
) -> Result<Arm> {
    let mlp = require_model(cfg, sigma)?;
    let patterns = require_patterns(cfg, sigma, &mlp, rules)?;
    Ok(Arm {
        sigma,
        mlp,
        patterns,
        data: test_data(cfg, clean, sigma)?,
    })
}

fn cell(
    cfg: &ExperimentConfig,
    arm: &Arm,
    index: usize,
    rule: Rule,
    worst: &mut f64,
) -> Result<RgbImage> {
    let target = resolve_target(cfg.target, None, &arm.mlp, &arm.data, index)?;
    let report = explain(
        &arm.mlp,
        arm.data.image(index),
        target,
        rule,
        arm.patterns.as_ref(),
        cfg.stabilizer,
    )?;
    if let Some(r) = report.conservation_residual {
        *worst = worst.max(r);
    }
    render_heatmap(&report.input_relevance, IMAGE_SIDE, cfg.upscale)
}

pub fn run(cfg: &ExperimentConfig, mode: GridMode) -> Result<GridOutcome> {
    ensure_out_dir(cfg)?;
    let rules = cfg.parsed_rules()?;
    let clean = load_test_set(cfg)?;
    let mut worst = 0.0f64;
    let (cells, row_labels, col_labels, corner): (
        Vec<Vec<RgbImage>>,
        Vec<String>,
        Vec<String>,
        String,
    ) = match mode {
        GridMode::NoiseSweep => {
            let index = sweep_index(cfg, &clean)?;
            let arms = cfg
                .noise_levels
                .iter()
                .map(|&s| arm(cfg, &clean, s, &rules))
                .collect::<Result<Vec<_>>>()?;
            let mut cells = Vec::with_capacity(rules.len());
            for &rule in &rules {
                let row = arms
                    .iter()
                    .map(|a| cell(cfg, a, index, rule, &mut worst))
                    .collect::<Result<Vec<_>>>()?;
                cells.push(row);
            }
            let cols = arms.iter().map(|a| sigma_label(a.sigma)).collect();
            (
                cells,
                rules.iter().map(|&r| rule_label(r)).collect(),
                cols,
                "S".to_string(),
            )
        }
        GridMode::Digits => {
            let a = arm(cfg, &clean, DIGIT_GRID_SIGMA, &rules)?;
            let indices = digit_indices(cfg, &clean)?;
            let mut cells = Vec::with_capacity(indices.len());
            for &index in &indices {
                let row = rules
                    .iter()
                    .map(|&rule| cell(cfg, &a, index, rule, &mut worst))
                    .collect::<Result<Vec<_>>>()?;
                cells.push(row);
            }
            let rows = indices
                .iter()
                .map(|&i| clean.label(i).to_string())
                .collect();
            let cols = rules.iter().map(|&r| rule_label(r)).collect();
            (
                cells,
                rows,
                cols,
                format!("S={}", sigma_label(DIGIT_GRID_SIGMA)),
            )
        }
    };
    let (image, layout) = compose_grid(&cells, &row_labels, &col_labels, &corner)?;
    let path = cfg.out_dir.join(mode.file_name());
    write_png(&image, &path)?;
    Ok(GridOutcome {
        mode,
        path,
        layout,
        image,
        max_residual: worst,
    })
}
