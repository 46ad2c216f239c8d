//! Deep Taylor decomposition for dense ReLU networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: dense MLPs with forward traces, exact input gradients, the
//!   bias-as-input view, SGD training and the `DTDN` model format.
//! - [`relevance`]: layer-wise relevance redistribution for the `z`, `w²`,
//!   `w⁺`, `a` and `a⁺` rules, plus gradient and gradient×input baselines.
//! - [`patterns`]: streaming estimation of the per-neuron patterns consumed
//!   by the `a` rules, and the `DTDP` pattern format.
//! - [`genmodel`]: a synthetic generative model with known task pattern and
//!   distractors, for comparing filters against patterns.
//! - [`dataio`]: MNIST IDX parsing, unit scaling and Gaussian noise.
//!
//! All arithmetic is `f64`.

pub mod dataio;
pub mod error;
pub mod genmodel;
pub mod linalg;
pub mod network;
pub mod patterns;
pub mod relevance;
mod wire;

pub use dataio::{add_gaussian_noise, Dataset, NoiseConfig};
pub use error::{Error, Result};
pub use network::{Activation, DenseLayer, ForwardTrace, Init, Mlp, TrainConfig};
pub use patterns::{estimate_patterns, MomentAccumulator, PatternSet};
pub use relevance::{explain, RelevanceReport, Rule};
