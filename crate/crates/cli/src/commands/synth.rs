use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dtd_core::genmodel::{pattern_vs_filter_demo, DemoReport, GenerativeSpec};

use crate::error::Result;
use crate::render::write_text;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthArgs {
    pub dim: usize,
    pub distractors: usize,
    pub sigma_eps: f64,
    pub samples: usize,
    pub seed: u64,
    pub ridge: f64,
}

impl Default for SynthArgs {
    fn default() -> Self {
        Self {
            dim: 20,
            distractors: 5,
            sigma_eps: 0.1,
            samples: 50_000,
            seed: 0,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub spec: GenerativeSpec,
    pub report: DemoReport,
    pub table: String,
    pub csv: Option<PathBuf>,
}

pub fn table(args: &SynthArgs, report: &DemoReport) -> String {
    let d = &report.diagnostics;
    let mut out = String::new();
    let rows: [(&str, String); 9] = [
        ("dim", args.dim.to_string()),
        ("distractors", args.distractors.to_string()),
        ("sigma_eps", args.sigma_eps.to_string()),
        ("samples", report.samples.to_string()),
        ("seed", args.seed.to_string()),
        ("task_gain", format!("{:.6}", d.task_gain)),
        ("max_leak", format!("{:.6}", d.max_leak)),
        ("cos(w,a_t)", format!("{:.6}", report.filter_cosine)),
        ("cos(a_hat,a_t)", format!("{:.6}", report.pattern_cosine)),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<16} {v}");
    }
    out
}

/// Coordinates of the true pattern, the fitted filter and the estimated
/// pattern, one line per input dimension.
pub fn csv(spec: &GenerativeSpec, report: &DemoReport) -> String {
    let mut out = String::from("i,a_t,w,a_hat\n");
    for i in 0..spec.dim() {
        let _ = writeln!(
            out,
            "{i},{:?},{:?},{:?}",
            spec.pattern[i], report.filter[i], report.pattern[i]
        );
    }
    out
}

pub fn run(
    args: &SynthArgs,
    report_path: Option<&Path>,
    csv_path: Option<&Path>,
) -> Result<SynthOutcome> {
    let spec = GenerativeSpec::random(args.dim, args.distractors, args.sigma_eps, args.seed)?;
    let report = pattern_vs_filter_demo(&spec, args.samples, args.ridge)?;
    let table = table(args, &report);
    if let Some(p) = report_path {
        write_text(p, &table)?;
    }
    if let Some(p) = csv_path {
        write_text(p, &csv(&spec, &report))?;
    }
    Ok(SynthOutcome {
        spec,
        report,
        table,
        csv: csv_path.map(Path::to_path_buf),
    })
}
