//! Streaming estimation of per-neuron task patterns.
//!
//! For neuron `j` with augmented inputs `x′ₙ` and pre-activations
//! `zₙⱼ = w′ⱼ·x′ₙ`, regressing each input coordinate on the neuron output gives
//!
//! ```text
//! âⱼ = (w′ⱼᵀ X X ᵀ w′ⱼ)⁻¹ w′ⱼᵀ X Xᵀ = Σₙ x′ₙ zₙⱼ / Σₙ zₙⱼ²
//! ```
//!
//! so only the cross moment and the output energy have to be accumulated.
//! Moments are uncentered and every neuron is regressed independently.

pub mod io;

use sha2::{Digest, Sha256};

use crate::dataio::Dataset;
use crate::error::{check_len, Error, Result};
use crate::linalg::axpy;
use crate::network::io::model_to_bytes;
use crate::network::{ForwardTrace, Mlp};

pub const DEFAULT_DEGENERACY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
struct LayerMoments {
    fan_out: usize,
    fan_in_aug: usize,
    /// Column-major: neuron `j` owns `cross[j*fan_in_aug..(j+1)*fan_in_aug]`.
    cross: Vec<f64>,
    z_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    layers: Vec<LayerMoments>,
    count: u64,
}

impl MomentAccumulator {
    /// Empty accumulator for layers of the given `(fan_out, fan_in)` shapes.
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let layers = shapes
            .iter()
            .map(|&(fan_out, fan_in)| LayerMoments {
                fan_out,
                fan_in_aug: fan_in + 1,
                cross: vec![0.0; fan_out * (fan_in + 1)],
                z_sq: vec![0.0; fan_out],
            })
            .collect();
        Self { layers, count: 0 }
    }

    pub fn for_network(mlp: &Mlp) -> Self {
        let shapes: Vec<_> = mlp
            .layers()
            .iter()
            .map(|l| (l.fan_out(), l.fan_in()))
            .collect();
        Self::new(&shapes)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Σ x′ z for neuron `j` of layer `l`.
    pub fn cross_moment(&self, l: usize, j: usize) -> &[f64] {
        let m = &self.layers[l];
        &m.cross[j * m.fan_in_aug..(j + 1) * m.fan_in_aug]
    }

    pub fn z_sq(&self, l: usize, j: usize) -> f64 {
        self.layers[l].z_sq[j]
    }

    pub fn accumulate(&mut self, trace: &ForwardTrace) -> Result<()> {
        check_len("trace depth", self.layers.len(), trace.depth())?;
        for (l, m) in self.layers.iter().enumerate() {
            check_len(
                "trace layer input",
                m.fan_in_aug - 1,
                trace.layer_input(l).len(),
            )?;
            check_len(
                "trace pre-activation",
                m.fan_out,
                trace.pre_activations[l].len(),
            )?;
        }
        for (l, m) in self.layers.iter_mut().enumerate() {
            let input = trace.layer_input(l);
            let n = m.fan_in_aug - 1;
            for (j, &z) in trace.pre_activations[l].iter().enumerate() {
                if z == 0.0 {
                    continue;
                }
                let col = &mut m.cross[j * m.fan_in_aug..(j + 1) * m.fan_in_aug];
                axpy(z, input, &mut col[..n]);
                col[n] += z;
                m.z_sq[j] += z * z;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Adds `other` into `self`.
    pub fn merge_from(&mut self, other: &MomentAccumulator) -> Result<()> {
        let same_layout = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.fan_out == b.fan_out && a.fan_in_aug == b.fan_in_aug);
        if !same_layout {
            return Err(Error::LayoutMismatch);
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.cross.iter_mut().zip(&b.cross).for_each(|(x, y)| *x += y);
            a.z_sq.iter_mut().zip(&b.z_sq).for_each(|(x, y)| *x += y);
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finalize(&self, degeneracy_threshold: f64) -> Result<PatternSet> {
        if self.count == 0 {
            return Err(Error::EmptyDataset);
        }
        let floor = degeneracy_threshold * self.count as f64;
        let layers = self
            .layers
            .iter()
            .map(|m| {
                let mut data = vec![0.0; m.cross.len()];
                let mut degenerate = vec![false; m.fan_out];
                for (j, flag) in degenerate.iter_mut().enumerate() {
                    let zz = m.z_sq[j];
                    if zz > floor {
                        let range = j * m.fan_in_aug..(j + 1) * m.fan_in_aug;
                        for (dst, &src) in data[range.clone()].iter_mut().zip(&m.cross[range]) {
                            *dst = src / zz;
                        }
                    } else {
                        *flag = true;
                    }
                }
                PatternLayer {
                    fan_out: m.fan_out,
                    fan_in_aug: m.fan_in_aug,
                    data,
                    degenerate,
                }
            })
            .collect();
        Ok(PatternSet {
            layers,
            fingerprint: Fingerprint {
                samples: self.count,
                ..Fingerprint::default()
            },
        })
    }
}

pub fn merge(a: &MomentAccumulator, b: &MomentAccumulator) -> Result<MomentAccumulator> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

/// Patterns of one layer: column `j` is `âⱼ` over the augmented fan-in.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternLayer {
    fan_out: usize,
    fan_in_aug: usize,
    data: Vec<f64>,
    degenerate: Vec<bool>,
}

impl PatternLayer {
    pub fn new(
        fan_out: usize,
        fan_in_aug: usize,
        data: Vec<f64>,
        degenerate: Vec<bool>,
    ) -> Result<Self> {
        check_len("pattern matrix", fan_out * fan_in_aug, data.len())?;
        check_len("degenerate flags", fan_out, degenerate.len())?;
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pattern matrix"));
        }
        Ok(Self {
            fan_out,
            fan_in_aug,
            data,
            degenerate,
        })
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn fan_in_aug(&self) -> usize {
        self.fan_in_aug
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.fan_in_aug..(j + 1) * self.fan_in_aug]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_degenerate(&self, j: usize) -> bool {
        self.degenerate[j]
    }

    pub fn degenerate_flags(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// Which model and data a pattern set was estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Fingerprint {
    pub model: [u8; 32],
    pub dataset: [u8; 32],
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    layers: Vec<PatternLayer>,
    pub fingerprint: Fingerprint,
}

impl PatternSet {
    pub fn new(layers: Vec<PatternLayer>, fingerprint: Fingerprint) -> Self {
        Self {
            layers,
            fingerprint,
        }
    }

    pub fn layers(&self) -> &[PatternLayer] {
        &self.layers
    }

    pub fn degenerate_count(&self) -> usize {
        self.layers.iter().map(PatternLayer::degenerate_count).sum()
    }

    /// Errors unless the fingerprint names exactly this model and dataset.
    pub fn check_source(&self, mlp: &Mlp, dataset: Option<&Dataset>) -> Result<()> {
        if self.fingerprint.model != model_hash(mlp) {
            return Err(Error::PatternMismatch(
                "pattern file was estimated for a different model".into(),
            ));
        }
        if let Some(d) = dataset {
            if self.fingerprint.dataset != d.fingerprint() {
                return Err(Error::PatternMismatch(
                    "pattern file was estimated on a different dataset".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn model_hash(mlp: &Mlp) -> [u8; 32] {
    Sha256::digest(model_to_bytes(mlp)).into()
}

pub fn estimate_patterns(mlp: &Mlp, dataset: &Dataset) -> Result<PatternSet> {
    estimate_patterns_with(mlp, dataset, DEFAULT_DEGENERACY_THRESHOLD)
}

/// Accumulates moments over every sample of `dataset` and finalizes them.
pub fn estimate_patterns_with(
    mlp: &Mlp,
    dataset: &Dataset,
    degeneracy_threshold: f64,
) -> Result<PatternSet> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = MomentAccumulator::for_network(mlp);
    for i in 0..dataset.len() {
        acc.accumulate(&mlp.forward_trace(dataset.image(i))?)?;
    }
    let mut set = acc.finalize(degeneracy_threshold)?;
    set.fingerprint = Fingerprint {
        model: model_hash(mlp),
        dataset: dataset.fingerprint(),
        samples: acc.count(),
    };
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, DenseLayer};

    fn linear(w: &[f64], b: f64) -> Mlp {
        Mlp::new(vec![DenseLayer::from_rows(
            &[w.to_vec()],
            vec![b],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn single_sample_accumulation() {
        let net = linear(&[1.0, 2.0], 0.0);
        let mut acc = MomentAccumulator::for_network(&net);
        acc.accumulate(&net.forward_trace(&[1.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(acc.cross_moment(0, 0), &[3.0, 3.0, 3.0]);
        assert_eq!(acc.z_sq(0, 0), 9.0);
        let set = acc.finalize(DEFAULT_DEGENERACY_THRESHOLD).unwrap();
        for &v in set.layers()[0].column(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_accumulator_rejected() {
        let acc = MomentAccumulator::new(&[(2, 3)]);
        assert!(matches!(acc.finalize(1e-12), Err(Error::EmptyDataset)));
    }

    #[test]
    fn noise_free_pattern_is_recovered() {
        // x = a·s with a = [2, 0, 1]; w·a = 1 so z = s.
        let a = [2.0, 0.0, 1.0];
        let net = linear(&[0.3, 5.0, 0.4], 0.0);
        let mut acc = MomentAccumulator::for_network(&net);
        for k in 0..25 {
            let s = (k as f64 * 0.7).sin() + 0.1;
            let x: Vec<f64> = a.iter().map(|ai| ai * s).collect();
            acc.accumulate(&net.forward_trace(&x).unwrap()).unwrap();
        }
        let set = acc.finalize(DEFAULT_DEGENERACY_THRESHOLD).unwrap();
        let col = set.layers()[0].column(0);
        for (got, want) in col[..3].iter().zip(a) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn dead_neuron_is_flagged() {
        let layer = DenseLayer::from_rows(
            &[vec![1.0, 1.0], vec![0.0, 0.0]],
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap();
        let net = Mlp::new(vec![layer]).unwrap();
        let data = Dataset::new(vec![1.0, 2.0, 0.5, -1.0], 2, vec![0, 1]).unwrap();
        let set = estimate_patterns(&net, &data).unwrap();
        let p = &set.layers()[0];
        assert!(p.is_degenerate(1) && !p.is_degenerate(0));
        assert!(p.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(set.degenerate_count(), 1);
    }

    #[test]
    fn merge_identity_and_layout_check() {
        let net = linear(&[0.5, -1.0], 0.2);
        let mut acc = MomentAccumulator::for_network(&net);
        acc.accumulate(&net.forward_trace(&[0.1, 0.9]).unwrap())
            .unwrap();
        let empty = MomentAccumulator::for_network(&net);
        assert_eq!(merge(&acc, &empty).unwrap(), acc);
        let other = MomentAccumulator::new(&[(1, 3)]);
        assert!(matches!(merge(&acc, &other), Err(Error::LayoutMismatch)));
    }

    #[test]
    fn fingerprint_binds_model_and_data() {
        let net = linear(&[0.5, -1.0], 0.2);
        let data = Dataset::new(vec![1.0, 2.0], 2, vec![0]).unwrap();
        let set = estimate_patterns(&net, &data).unwrap();
        assert!(set.check_source(&net, Some(&data)).is_ok());
        let other_net = linear(&[0.5, -1.5], 0.2);
        assert!(set.check_source(&other_net, None).is_err());
        let other_data = Dataset::new(vec![1.0, 2.5], 2, vec![0]).unwrap();
        assert!(set.check_source(&net, Some(&other_data)).is_err());
    }
}
