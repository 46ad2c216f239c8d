use std::fmt::Write as _;
use std::path::PathBuf;

use dtd_core::{explain, RelevanceReport, Rule};

use super::{
    check_index, ensure_out_dir, file_stem, load_test_set, require_model, require_patterns,
    resolve_target, sweep_index, test_data, IMAGE_SIDE,
};
use crate::config::{level_tag, ExperimentConfig};
use crate::error::Result;
use crate::render::{render_heatmap, render_magnitude, write_pgm, write_png, write_text};

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainArgs {
    pub sigma: f64,
    pub rule: Rule,
    /// Test-set index; the sweep digit when unset.
    pub index: Option<usize>,
    /// Output neuron; chosen by `cfg.target` when unset.
    pub target: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExplainOutcome {
    pub report: RelevanceReport,
    pub index: usize,
    pub csv: PathBuf,
    pub png: PathBuf,
    pub pgm: PathBuf,
}

/// One-line header followed by the map in row-major pixel order. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn relevance_csv(report: &RelevanceReport, sigma: f64, index: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# rule={},sigma={},target={},index={}",
        report.rule,
        level_tag(sigma),
        report.target,
        index
    );
    for row in report.input_relevance.chunks(IMAGE_SIDE) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn run(cfg: &ExperimentConfig, args: &ExplainArgs) -> Result<ExplainOutcome> {
    ensure_out_dir(cfg)?;
    let mlp = require_model(cfg, args.sigma)?;
    let patterns = require_patterns(cfg, args.sigma, &mlp, &[args.rule])?;
    let clean = load_test_set(cfg)?;
    let index = match args.index {
        Some(i) => {
            check_index(&clean, i)?;
            i
        }
        None => sweep_index(cfg, &clean)?,
    };
    let data = test_data(cfg, &clean, args.sigma)?;
    let target = resolve_target(cfg.target, args.target, &mlp, &data, index)?;
    let report = explain(
        &mlp,
        data.image(index),
        target,
        args.rule,
        patterns.as_ref(),
        cfg.stabilizer,
    )?;

    let stem = format!(
        "explain_{}_sigma{}_idx{}",
        file_stem(args.rule),
        level_tag(args.sigma),
        index
    );
    let csv = cfg.out_dir.join(format!("{stem}.csv"));
    let png = cfg.out_dir.join(format!("{stem}.png"));
    let pgm = cfg.out_dir.join(format!("{stem}.pgm"));
    write_text(&csv, &relevance_csv(&report, args.sigma, index))?;
    write_png(
        &render_heatmap(&report.input_relevance, IMAGE_SIDE, cfg.upscale)?,
        &png,
    )?;
    write_pgm(
        &render_magnitude(&report.input_relevance, IMAGE_SIDE, cfg.upscale)?,
        &pgm,
    )?;
    Ok(ExplainOutcome {
        report,
        index,
        csv,
        png,
        pgm,
    })
}
