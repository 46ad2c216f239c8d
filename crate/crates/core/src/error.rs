use std::path::PathBuf;

use crate::relevance::Rule;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the core library.
///
/// Variants are grouped by what a caller can do about them: bad input
/// (dimension, range, layout), broken files (format), and numerical failures
/// (degenerate denominators, divergence, singular systems).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("target neuron {target} out of range (output width {width})")]
    TargetOutOfRange { target: usize, width: usize },

    #[error("index {index} out of range ({len} samples)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {label} at position {position} out of range (max {max})")]
    LabelOutOfRange { label: u8, position: usize, max: u8 },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("search direction is orthogonal to the weight row (|w.v| = {dot:e})")]
    DegenerateDirection { dot: f64 },

    #[error(
        "degenerate denominator for rule {rule} at layer {layer}, neuron {neuron} \
         (w.v = {denominator:e}); consider a non-zero stabilizer"
    )]
    DegenerateDenominator {
        rule: Rule,
        layer: usize,
        neuron: usize,
        denominator: f64,
    },

    #[error("rule {0} is gradient-based and has no layer-wise redistribution")]
    NotLayerwise(Rule),

    #[error("rule {0} requires a pattern set")]
    PatternMissing(Rule),

    #[error("pattern set does not match the network: {0}")]
    PatternMismatch(String),

    #[error("accumulator layouts differ")]
    LayoutMismatch,

    #[error("dataset already carries noise (sigma = {0})")]
    AlreadyNoisy(f64),

    #[error("normal matrix is singular; retry with a positive ridge")]
    Singular,

    #[error("wrong magic number: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("dimension overflow in header: {0}")]
    DimensionOverflow(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Broken or unreadable files, as opposed to numerical failures.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::WrongMagic { .. }
                | Error::Truncated { .. }
                | Error::DimensionOverflow(_)
                | Error::Format(_)
                | Error::Io { .. }
                | Error::EmptyDataset
                | Error::LabelOutOfRange { .. }
                | Error::IndexOutOfRange { .. }
                | Error::PatternMismatch(_)
                | Error::AlreadyNoisy(_)
        )
    }

    /// Failures of the arithmetic itself.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::DegenerateDirection { .. }
                | Error::DegenerateDenominator { .. }
                | Error::Singular
                | Error::NonFinite(_)
        )
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
