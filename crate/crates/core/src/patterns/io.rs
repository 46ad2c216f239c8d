//! `DTDP` pattern files.
//!
//! ```text
//! "DTDP" | version | layer count |
//!   per layer: fan_out, fan_in+1, columns (column-major reals), degenerate bitmap |
//! model sha256 (32 bytes) | dataset sha256 (32 bytes) | sample count (u64)
//! ```
//!
//! Integers are little-endian, `u32` unless noted; reals are 64-bit LE. The
//! bitmap has `ceil(fan_out / 8)` bytes, bit `j % 8` of byte `j / 8` set when
//! neuron `j` is degenerate.

use std::path::Path;

use super::{Fingerprint, PatternLayer, PatternSet};
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

pub const PATTERN_MAGIC: [u8; 4] = *b"DTDP";
pub const PATTERN_VERSION: u32 = 1;

pub fn patterns_to_bytes(set: &PatternSet) -> Vec<u8> {
    let mut w = Writer::new(PATTERN_MAGIC, PATTERN_VERSION);
    w.u32(set.layers().len() as u32);
    for layer in set.layers() {
        w.u32(layer.fan_out() as u32);
        w.u32(layer.fan_in_aug() as u32);
        w.f64s(layer.data());
        let mut bitmap = vec![0u8; layer.fan_out().div_ceil(8)];
        for (j, &d) in layer.degenerate_flags().iter().enumerate() {
            if d {
                bitmap[j / 8] |= 1 << (j % 8);
            }
        }
        w.bytes(&bitmap);
    }
    w.bytes(&set.fingerprint.model);
    w.bytes(&set.fingerprint.dataset);
    w.u64(set.fingerprint.samples);
    w.finish()
}

pub fn patterns_from_bytes(bytes: &[u8]) -> Result<PatternSet> {
    let mut r = Reader::new(bytes, PATTERN_MAGIC, PATTERN_VERSION)?;
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let fan_out = r.u32()? as usize;
        let fan_in_aug = r.u32()? as usize;
        let n = fan_out
            .checked_mul(fan_in_aug)
            .ok_or_else(|| Error::DimensionOverflow(format!("{fan_out} x {fan_in_aug}")))?;
        let data = r.f64s(n)?;
        let bitmap = r.take(fan_out.div_ceil(8))?;
        let degenerate = (0..fan_out)
            .map(|j| bitmap[j / 8] >> (j % 8) & 1 == 1)
            .collect();
        layers.push(PatternLayer::new(fan_out, fan_in_aug, data, degenerate)?);
    }
    let model: [u8; 32] = r.take(32)?.try_into().unwrap();
    let dataset: [u8; 32] = r.take(32)?.try_into().unwrap();
    let samples = r.u64()?;
    r.expect_end()?;
    Ok(PatternSet::new(
        layers,
        Fingerprint {
            model,
            dataset,
            samples,
        },
    ))
}

pub fn save_patterns(set: &PatternSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, patterns_to_bytes(set)).map_err(|e| Error::io(path, e))
}

pub fn load_patterns(path: impl AsRef<Path>) -> Result<PatternSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    patterns_from_bytes(&bytes)
}
