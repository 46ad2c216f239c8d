use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dtd_cli::commands::grid::GridMode;
use dtd_cli::commands::{explain, grid, patterns, selftest, synth, train};
use dtd_cli::config::level_tag;
use dtd_cli::{CliError, ExperimentConfig, Result, TargetChoice};
use dtd_core::Rule;

#[derive(Parser, Debug)]
#[command(
    name = "dtd",
    version,
    about = "Deep Taylor decomposition experiments on MNIST"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training images (IDX).
    #[arg(long, global = true)]
    mnist_images: Option<PathBuf>,
    /// Training labels (IDX).
    #[arg(long, global = true)]
    mnist_labels: Option<PathBuf>,
    #[arg(long, global = true)]
    mnist_test_images: Option<PathBuf>,
    #[arg(long, global = true)]
    mnist_test_labels: Option<PathBuf>,
    /// Output directory for models, patterns, images and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    stabilizer: Option<f64>,
    /// Train every arm on clean images instead of images at its noise level.
    #[arg(long, global = true)]
    train_on_clean: bool,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Use only the first N training images.
    #[arg(long, global = true)]
    train_limit: Option<usize>,
    /// Comma-separated rule list for grids.
    #[arg(long, global = true, value_delimiter = ',')]
    rules: Option<Vec<String>>,
    /// Start explanations from the predicted class instead of the label.
    #[arg(long, global = true)]
    predicted: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network per noise level.
    Train {
        /// Only this level (default: every configured level).
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Estimate patterns for the trained networks.
    Patterns {
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Explain one test image and write CSV, PNG and PGM outputs.
    Explain {
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value = "z")]
        rule: String,
        /// Test-set index (default: first test image of a 4).
        #[arg(long)]
        index: Option<usize>,
        /// Output neuron to explain.
        #[arg(long)]
        target: Option<usize>,
    },
    /// Render heatmap grids.
    Grid {
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Pattern versus filter on the synthetic generative model.
    Synth {
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        distractors: usize,
        /// Isotropic noise level.
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Also write per-coordinate values as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the invariant checks on built-in fixtures.
    Selftest,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Fig1,
    Fig2,
    Both,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value.clone() {
                cfg.$field = v;
            }
        };
    }
    set!(train_images, c.mnist_images);
    set!(train_labels, c.mnist_labels);
    set!(test_images, c.mnist_test_images);
    set!(test_labels, c.mnist_test_labels);
    set!(out_dir, c.out);
    set!(master_seed, c.seed);
    set!(stabilizer, c.stabilizer);
    set!(epochs, c.epochs);
    set!(rules, c.rules);
    if c.train_limit.is_some() {
        cfg.train_limit = c.train_limit;
    }
    if c.train_on_clean {
        cfg.train_on_noisy = false;
    }
    if c.predicted {
        cfg.target = TargetChoice::Predicted;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn levels(cfg: &ExperimentConfig, sigma: Option<f64>) -> Vec<f64> {
    sigma.map_or_else(|| cfg.noise_levels.clone(), |s| vec![s])
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Selftest = cli.command {
        let results = selftest::run();
        for r in &results {
            println!("{}", r.line());
        }
        let failed = results.iter().filter(|r| !r.passed()).count();
        println!(
            "{} of {} checks passed",
            results.len() - failed,
            results.len()
        );
        return if failed == 0 {
            Ok(())
        } else {
            Err(CliError::SelfTestFailed(failed))
        };
    }
    if let Command::Synth {
        dim,
        distractors,
        sigma,
        samples,
        ridge,
        csv,
    } = &cli.command
    {
        let args = synth::SynthArgs {
            dim: *dim,
            distractors: *distractors,
            sigma_eps: *sigma,
            samples: *samples,
            seed: cli.common.seed.unwrap_or(0),
            ridge: *ridge,
        };
        let out = synth::run(&args, None, csv.as_deref())?;
        print!("{}", out.table);
        return Ok(());
    }

    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Train { sigma } => {
            for o in train::run(&cfg, &levels(&cfg, sigma))? {
                println!(
                    "sigma={} trained_on={} test_acc={:.4} clean_acc={:.4} time={:.1}s -> {}",
                    level_tag(o.sigma),
                    level_tag(o.training_sigma),
                    o.test_accuracy,
                    o.clean_test_accuracy,
                    o.seconds,
                    o.model_path.display()
                );
            }
        }
        Command::Patterns { sigma } => {
            for o in patterns::run(&cfg, &levels(&cfg, sigma))? {
                println!(
                    "sigma={} samples={} degenerate={}/{} -> {}",
                    level_tag(o.sigma),
                    o.samples,
                    o.degenerate,
                    o.neurons,
                    o.path.display()
                );
            }
        }
        Command::Explain {
            sigma,
            rule,
            index,
            target,
        } => {
            let rule: Rule = rule
                .parse()
                .map_err(|e: dtd_core::relevance::UnknownRule| CliError::Usage(e.to_string()))?;
            let o = explain::run(
                &cfg,
                &explain::ExplainArgs {
                    sigma,
                    rule,
                    index,
                    target,
                },
            )?;
            println!("rule={} index={} target={}", rule, o.index, o.report.target);
            match o.report.conservation_residual {
                Some(r) => println!("conservation residual {r:e}"),
                None => println!("conservation residual n/a (gradient rule)"),
            }
            for p in [&o.csv, &o.png, &o.pgm] {
                println!("wrote {}", p.display());
            }
        }
        Command::Grid { mode } => {
            let modes: &[GridMode] = match mode {
                Mode::Fig1 => &[GridMode::NoiseSweep],
                Mode::Fig2 => &[GridMode::Digits],
                Mode::Both => &[GridMode::NoiseSweep, GridMode::Digits],
            };
            for &m in modes {
                let o = grid::run(&cfg, m)?;
                println!(
                    "{} rows x {} cols, max residual {:e} -> {}",
                    o.layout.rows,
                    o.layout.cols,
                    o.max_residual,
                    o.path.display()
                );
            }
        }
        Command::Synth { .. } | Command::Selftest => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
