//! Experiment configuration: TOML file values, overridden by command-line flags.

use std::path::{Path, PathBuf};

use dtd_core::{Init, Rule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Which logit an explanation starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TargetChoice {
    #[default]
    Label,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub noise_levels: Vec<f64>,
    pub rules: Vec<String>,
    /// Test-set indices shown in the digit grid. Empty means the first test
    /// image of every class.
    pub digit_indices: Vec<usize>,
    /// Test-set index shown in the noise sweep. Unset means the first "4".
    pub sweep_index: Option<usize>,
    pub master_seed: u64,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub out_dir: PathBuf,
    pub train_on_noisy: bool,
    pub stabilizer: f64,
    pub target: TargetChoice,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Use only the first N training images (all when unset).
    pub train_limit: Option<usize>,
    pub upscale: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mnist = PathBuf::from("data/mnist");
        Self {
            noise_levels: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            rules: ["saliency", "z", "w+", "a+"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            digit_indices: Vec::new(),
            sweep_index: None,
            master_seed: 0,
            train_images: mnist.join("train-images-idx3-ubyte"),
            train_labels: mnist.join("train-labels-idx1-ubyte"),
            test_images: mnist.join("t10k-images-idx3-ubyte"),
            test_labels: mnist.join("t10k-labels-idx1-ubyte"),
            out_dir: PathBuf::from("out"),
            train_on_noisy: true,
            stabilizer: 0.0,
            target: TargetChoice::Label,
            hidden: 200,
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 16,
            train_limit: None,
            upscale: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn parsed_rules(&self) -> Result<Vec<Rule>> {
        self.rules
            .iter()
            .map(|r| {
                r.parse::<Rule>()
                    .map_err(|e| CliError::Usage(e.to_string()))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_levels.is_empty() {
            return Err(CliError::Usage("noise_levels must not be empty".into()));
        }
        if self.noise_levels.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(CliError::Usage(
                "noise levels must be finite and non-negative".into(),
            ));
        }
        if self.hidden == 0 || self.batch_size == 0 || self.upscale == 0 {
            return Err(CliError::Usage(
                "hidden, batch_size and upscale must be positive".into(),
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(CliError::Usage("learning_rate must be positive".into()));
        }
        if self.stabilizer.is_nan() || self.stabilizer < 0.0 {
            return Err(CliError::Usage("stabilizer must be non-negative".into()));
        }
        self.parsed_rules()?;
        Ok(())
    }

    pub fn train_config(&self, sigma: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed_for("train", self.training_sigma(sigma)),
            init: Init::Glorot,
        }
    }

    /// Noise level of the data the model for arm `sigma` is trained on.
    pub fn training_sigma(&self, sigma: f64) -> f64 {
        if self.train_on_noisy {
            sigma
        } else {
            0.0
        }
    }

    pub fn seed_for(&self, stream: &str, sigma: f64) -> u64 {
        derive_seed(self.master_seed, stream, sigma.to_bits())
    }

    pub fn model_path(&self, sigma: f64) -> PathBuf {
        self.out_dir
            .join(format!("model_sigma{}.dtdn", level_tag(sigma)))
    }

    pub fn patterns_path(&self, sigma: f64) -> PathBuf {
        self.out_dir
            .join(format!("patterns_sigma{}.dtdp", level_tag(sigma)))
    }
}

/// `0.2` → `"0.20"`.
pub fn level_tag(sigma: f64) -> String {
    format!("{sigma:.2}")
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for a named stream and index under the master seed.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for b in stream.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "noise_levels = [0.0, 0.2]\nrules = [\"z\", \"a+\"]\nmaster_seed = 5\n",
            Path::new("x.toml"),
        )
        .unwrap();
        assert_eq!(cfg.noise_levels, vec![0.0, 0.2]);
        assert_eq!(cfg.parsed_rules().unwrap(), vec![Rule::Z, Rule::APlus]);
        assert_eq!(cfg.hidden, 200);
    }

    #[test]
    fn unknown_keys_and_rules_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("nosie = 1", Path::new("x.toml")).is_err());
        let cfg = ExperimentConfig {
            rules: vec!["alpha-beta".into()],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn seeds_are_distinct_per_stream_and_level() {
        let cfg = ExperimentConfig::default();
        let a = cfg.seed_for("train", 0.2);
        assert_eq!(a, cfg.seed_for("train", 0.2));
        assert_ne!(a, cfg.seed_for("train", 0.4));
        assert_ne!(a, cfg.seed_for("test-noise", 0.2));
        assert_eq!(level_tag(0.2), "0.20");
    }
}
