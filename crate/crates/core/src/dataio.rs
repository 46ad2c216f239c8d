//! MNIST IDX ingestion, unit scaling and Gaussian noise injection.
//!
//! IDX files are big-endian: a 32-bit magic (`0x00000803` for rank-3 unsigned
//! byte tensors, `0x00000801` for rank-1), one 32-bit size per dimension and
//! then the raw bytes.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: u8 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count × rows·cols` bytes, image after image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn count(&self) -> usize {
        if self.pixels_per_image() == 0 {
            0
        } else {
            self.pixels.len() / self.pixels_per_image()
        }
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.pixels_per_image();
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::Truncated {
            expected: offset + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found == expected {
        Ok(())
    } else {
        Err(Error::WrongMagic { expected, found })
    }
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let expected = header
        .checked_add(len)
        .ok_or_else(|| Error::DimensionOverflow(format!("payload of {len} bytes")))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after IDX payload",
            bytes.len() - expected
        )));
    }
    Ok(&bytes[header..])
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::DimensionOverflow(format!("{count} x {rows} x {cols}")))?;
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let data = payload(bytes, 16, len)?;
    Ok(IdxImages {
        rows,
        cols,
        pixels: data.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let data = payload(bytes, 8, count)?;
    if let Some((position, &label)) = data.iter().enumerate().find(|(_, &l)| l >= NUM_CLASSES) {
        return Err(Error::LabelOutOfRange {
            label,
            position,
            max: NUM_CLASSES - 1,
        });
    }
    Ok(data.to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    parse_idx_images(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [images.count(), images.rows, images.cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// `byte / 255`, exactly.
pub fn scale_to_unit(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&b| f64::from(b) / 255.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

/// Images with labels, stored row-major `len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<f64>,
    dim: usize,
    labels: Vec<u8>,
    noise_sigma: f64,
    seed: u64,
}

impl Dataset {
    pub fn new(images: Vec<f64>, dim: usize, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                context: "dataset dimension",
                expected: 1,
                actual: 0,
            });
        }
        check_len("dataset images", labels.len() * dim, images.len())?;
        if !images.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset images"));
        }
        Ok(Self {
            images,
            dim,
            labels,
            noise_sigma: 0.0,
            seed: 0,
        })
    }

    /// Scales the raw bytes into `[0, 1]` and pairs them with labels.
    pub fn from_idx(images: &IdxImages, labels: &[u8]) -> Result<Self> {
        check_len("image/label count", images.count(), labels.len())?;
        Self::new(
            scale_to_unit(&images.pixels),
            images.pixels_per_image(),
            labels.to_vec(),
        )
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        Self::from_idx(&load_idx_images(images)?, &load_idx_labels(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    pub fn images(&self) -> &[f64] {
        &self.images
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Seed of the noise draw; meaningful only when `noise_sigma > 0`.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The first `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            ..self.clone_meta()
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut images = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                });
            }
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            images,
            labels,
            ..self.clone_meta()
        })
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            images: Vec::new(),
            dim: self.dim,
            labels: Vec::new(),
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }

    /// First index whose label equals `label`.
    pub fn first_of_class(&self, label: u8) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// SHA-256 over the dimension, the labels and the image bits.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update(&self.labels);
        for v in &self.images {
            hasher.update(v.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

/// Adds i.i.d. `N(0, sigma²)` noise to every pixel, without clipping.
///
/// Image `i` draws from its own ChaCha stream `i` under `cfg.seed`, so the
/// noise on an image does not depend on which other images are present.
pub fn add_gaussian_noise(dataset: &Dataset, cfg: NoiseConfig) -> Result<Dataset> {
    if dataset.noise_sigma != 0.0 {
        return Err(Error::AlreadyNoisy(dataset.noise_sigma));
    }
    if !cfg.sigma.is_finite() || cfg.sigma < 0.0 {
        return Err(Error::NonFinite("noise sigma"));
    }
    let mut out = dataset.clone();
    out.noise_sigma = cfg.sigma;
    out.seed = cfg.seed;
    if cfg.sigma == 0.0 {
        return Ok(out);
    }
    let dim = dataset.dim;
    for (i, image) in out.images.chunks_exact_mut(dim).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        for px in image {
            let e: f64 = StandardNormal.sample(&mut rng);
            *px += cfg.sigma * e;
        }
    }
    Ok(out)
}
