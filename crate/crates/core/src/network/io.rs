//! `DTDN` model files.
//!
//! Layout, all integers 32-bit little-endian unsigned and all reals 64-bit
//! little-endian IEEE-754:
//!
//! ```text
//! "DTDN" | version | layer count | per layer: fan_out, fan_in, activation code,
//!                                  weights (row-major), bias
//! ```

use std::path::Path;

use super::{Activation, DenseLayer, Mlp};
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

pub const MODEL_MAGIC: [u8; 4] = *b"DTDN";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(mlp: &Mlp) -> Vec<u8> {
    let mut w = Writer::new(MODEL_MAGIC, MODEL_VERSION);
    w.u32(mlp.layers().len() as u32);
    for layer in mlp.layers() {
        w.u32(layer.fan_out() as u32);
        w.u32(layer.fan_in() as u32);
        w.u32(layer.activation().code());
        w.f64s(layer.weights());
        w.f64s(layer.bias());
    }
    w.finish()
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader::new(bytes, MODEL_MAGIC, MODEL_VERSION)?;
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let fan_out = r.u32()? as usize;
        let fan_in = r.u32()? as usize;
        let code = r.u32()?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
        let n = fan_out
            .checked_mul(fan_in)
            .ok_or_else(|| Error::DimensionOverflow(format!("{fan_out} x {fan_in}")))?;
        let weights = r.f64s(n)?;
        let bias = r.f64s(fan_out)?;
        layers.push(DenseLayer::new(weights, bias, fan_in, activation)?);
    }
    r.expect_end()?;
    Mlp::new(layers)
}

pub fn save_model(mlp: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(mlp)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Mlp> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
