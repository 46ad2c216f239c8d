//! Synthetic data with a known task pattern and known distractors.
//!
//! Each sample is `x = a_t·s_t + A_n·s_n + ε`, where `s_t` is the signal a
//! linear projection should recover, `s_n` are independent standard-normal
//! distractor sources and `ε` is isotropic Gaussian noise. A projection `w`
//! recovers `s_t` when `wᵀa_t = 1` and `wᵀA_n = 0`; in general `w` is then
//! *not* parallel to `a_t`, while the regression pattern `â` is.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::linalg::{cosine, dot};
use crate::network::{Activation, DenseLayer, Mlp};
use crate::patterns::{MomentAccumulator, DEFAULT_DEGENERACY_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalDistribution {
    StandardNormal,
    PlusMinusOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeSpec {
    /// `a_t`, length D.
    pub pattern: Vec<f64>,
    /// Columns of `A_n`, each of length D.
    pub distractors: Vec<Vec<f64>>,
    pub sigma_eps: f64,
    pub signal: SignalDistribution,
    pub seed: u64,
}

impl GenerativeSpec {
    pub fn new(
        pattern: Vec<f64>,
        distractors: Vec<Vec<f64>>,
        sigma_eps: f64,
        signal: SignalDistribution,
        seed: u64,
    ) -> Result<Self> {
        if pattern.is_empty() || pattern.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidNetwork(
                "task pattern must be non-zero".into(),
            ));
        }
        for col in &distractors {
            check_len("distractor pattern", pattern.len(), col.len())?;
        }
        if !sigma_eps.is_finite() || sigma_eps < 0.0 {
            return Err(Error::NonFinite("sigma_eps"));
        }
        if !pattern
            .iter()
            .chain(distractors.iter().flatten())
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("generative patterns"));
        }
        Ok(Self {
            pattern,
            distractors,
            sigma_eps,
            signal,
            seed,
        })
    }

    /// Random Gaussian `a_t` and `A_n`. The distractors are generically not
    /// orthogonal to `a_t`.
    pub fn random(dim: usize, distractors: usize, sigma_eps: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let pattern = draw(dim);
        let cols = (0..distractors).map(|_| draw(dim)).collect();
        Self::new(
            pattern,
            cols,
            sigma_eps,
            SignalDistribution::StandardNormal,
            seed,
        )
    }

    pub fn dim(&self) -> usize {
        self.pattern.len()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// `X` stored one sample per row (a column of the `D × N` data matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    dim: usize,
    samples: Vec<f64>,
    pub signal: Vec<f64>,
    /// `N × K` distractor source draws.
    pub sources: Vec<f64>,
}

impl SyntheticBatch {
    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, n: usize) -> &[f64] {
        &self.samples[n * self.dim..(n + 1) * self.dim]
    }

    pub fn source_count(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.sources.len() / self.len()
        }
    }

    pub fn sources_of(&self, n: usize) -> &[f64] {
        let k = self.source_count();
        &self.sources[n * k..(n + 1) * k]
    }
}

/// Draws `n` samples. The stream is fixed by `spec.seed`.
pub fn sample(spec: &GenerativeSpec, n: usize) -> SyntheticBatch {
    let dim = spec.dim();
    let k = spec.distractors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(n * dim);
    let mut signal = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n * k);
    let mut x = vec![0.0; dim];
    for _ in 0..n {
        let s: f64 = match spec.signal {
            SignalDistribution::StandardNormal => StandardNormal.sample(&mut rng),
            SignalDistribution::PlusMinusOne => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        for (xi, ai) in x.iter_mut().zip(&spec.pattern) {
            *xi = ai * s;
        }
        for col in &spec.distractors {
            let sn: f64 = StandardNormal.sample(&mut rng);
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi += ci * sn;
            }
            sources.push(sn);
        }
        if spec.sigma_eps > 0.0 {
            for xi in x.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *xi += spec.sigma_eps * e;
            }
        }
        samples.extend_from_slice(&x);
        signal.push(s);
    }
    SyntheticBatch {
        dim,
        samples,
        signal,
        sources,
    }
}

/// Least-squares projection regressing `s_t` on `x`:
/// `(Σ x xᵀ + ridge·I) w = Σ x s_t`, solved by Cholesky.
pub fn fit_projection(batch: &SyntheticBatch, ridge: f64) -> Result<Vec<f64>> {
    let d = batch.dim();
    if ridge.is_nan() || ridge < 0.0 {
        return Err(Error::NonFinite("ridge"));
    }
    if ridge == 0.0 && batch.len() <= d {
        return Err(Error::Singular);
    }
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for n in 0..batch.len() {
        let x = DVector::from_column_slice(batch.x(n));
        gram.ger(1.0, &x, &x, 1.0);
        rhs.axpy(batch.signal[n], &x, 1.0);
    }
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let max_diag = (0..d).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let chol = gram.cholesky().ok_or(Error::Singular)?;
    let min_pivot = (0..d)
        .map(|i| chol.l_dirty()[(i, i)].powi(2))
        .fold(f64::INFINITY, f64::min);
    if min_pivot.is_nan() || min_pivot <= 1e-12 * max_diag {
        return Err(Error::Singular);
    }
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDiagnostics {
    /// `wᵀa_t`; 1 for a projection that recovers the signal.
    pub task_gain: f64,
    /// `max_k |wᵀ A_n[:, k]|`; 0 when `w` blocks every distractor.
    pub max_leak: f64,
}

pub fn verify_filter_conditions(w: &[f64], spec: &GenerativeSpec) -> Result<FilterDiagnostics> {
    check_len("projection", spec.dim(), w.len())?;
    Ok(FilterDiagnostics {
        task_gain: dot(w, &spec.pattern),
        max_leak: spec
            .distractors
            .iter()
            .map(|c| dot(w, c).abs())
            .fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub filter: Vec<f64>,
    /// `â` over the D inputs.
    pub pattern: Vec<f64>,
    /// Coordinate of `â` on the constant bias input.
    pub pattern_bias: f64,
    pub filter_cosine: f64,
    pub pattern_cosine: f64,
    pub diagnostics: FilterDiagnostics,
    pub samples: usize,
}

/// Fits `w`, estimates `â` for the single linear neuron defined by `w`, and
/// measures how well each aligns with the true `a_t`.
pub fn pattern_vs_filter_demo(spec: &GenerativeSpec, n: usize, ridge: f64) -> Result<DemoReport> {
    let batch = sample(spec, n);
    let filter = fit_projection(&batch, ridge)?;
    let layer = DenseLayer::new(filter.clone(), vec![0.0], spec.dim(), Activation::Identity)?;
    let neuron = Mlp::new(vec![layer])?;
    let mut acc = MomentAccumulator::for_network(&neuron);
    for i in 0..batch.len() {
        acc.accumulate(&neuron.forward_trace(batch.x(i))?)?;
    }
    let patterns = acc.finalize(DEFAULT_DEGENERACY_THRESHOLD)?;
    let col = patterns.layers()[0].column(0);
    let pattern = col[..spec.dim()].to_vec();
    Ok(DemoReport {
        filter_cosine: cosine(&filter, &spec.pattern),
        pattern_cosine: cosine(&pattern, &spec.pattern),
        diagnostics: verify_filter_conditions(&filter, spec)?,
        pattern_bias: col[spec.dim()],
        filter,
        pattern,
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthogonal() -> GenerativeSpec {
        GenerativeSpec::new(
            vec![1.0, 0.0],
            vec![vec![0.0, 1.0]],
            0.0,
            SignalDistribution::StandardNormal,
            5,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_model_is_pure_signal() {
        let spec = GenerativeSpec::new(
            vec![1.5, -2.0, 0.5],
            vec![],
            0.0,
            SignalDistribution::PlusMinusOne,
            3,
        )
        .unwrap();
        let batch = sample(&spec, 20);
        for n in 0..20 {
            let s = batch.signal[n];
            assert!(s == 1.0 || s == -1.0);
            let expected: Vec<f64> = spec.pattern.iter().map(|a| a * s).collect();
            assert_eq!(batch.x(n), expected.as_slice());
        }
    }

    #[test]
    fn orthogonal_coordinates_separate() {
        let batch = sample(&orthogonal(), 50);
        for n in 0..50 {
            assert_eq!(batch.x(n)[0], batch.signal[n]);
            assert_eq!(batch.x(n)[1], batch.sources_of(n)[0]);
        }
    }

    #[test]
    fn column_reconstruction() {
        let spec = GenerativeSpec::random(6, 3, 0.0, 12).unwrap();
        let batch = sample(&spec, 10);
        for n in 0..10 {
            for i in 0..6 {
                let mut v = spec.pattern[i] * batch.signal[n];
                for (k, col) in spec.distractors.iter().enumerate() {
                    v += col[i] * batch.sources_of(n)[k];
                }
                assert_eq!(batch.x(n)[i], v);
            }
        }
    }

    #[test]
    fn fit_examples() {
        let w = fit_projection(&sample(&orthogonal(), 100), 0.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-9 && w[1].abs() < 1e-9);
        let diag = verify_filter_conditions(&w, &orthogonal()).unwrap();
        assert!((diag.task_gain - 1.0).abs() < 1e-9 && diag.max_leak <= 1e-9);

        let scalar = GenerativeSpec::new(
            vec![2.0],
            vec![],
            0.0,
            SignalDistribution::StandardNormal,
            1,
        )
        .unwrap();
        let w = fit_projection(&sample(&scalar, 10), 0.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_reported() {
        let spec = GenerativeSpec::new(
            vec![1.0, 1.0],
            vec![],
            0.0,
            SignalDistribution::StandardNormal,
            1,
        )
        .unwrap();
        let batch = sample(&spec, 30);
        assert!(matches!(fit_projection(&batch, 0.0), Err(Error::Singular)));
        assert!(fit_projection(&batch, 1e-6).is_ok());
        assert!(matches!(
            fit_projection(&sample(&orthogonal(), 2), 0.0),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn constructed_filters() {
        let a = vec![3.0, 4.0, 0.0];
        let norm_sq = 25.0;
        let w: Vec<f64> = a.iter().map(|v| v / norm_sq).collect();
        let perp = GenerativeSpec::new(
            a.clone(),
            vec![vec![0.0, 0.0, 1.0], vec![4.0, -3.0, 0.0]],
            0.0,
            SignalDistribution::StandardNormal,
            0,
        )
        .unwrap();
        let d = verify_filter_conditions(&w, &perp).unwrap();
        assert!((d.task_gain - 1.0).abs() < 1e-15);
        assert_eq!(d.max_leak, 0.0);

        // Distractor overlapping a_t by 0.5·a_t: leak = 0.5·wᵀa_t = 0.5.
        let overlap = GenerativeSpec::new(
            a.clone(),
            vec![vec![1.5, 2.0, 1.0]],
            0.0,
            SignalDistribution::StandardNormal,
            0,
        )
        .unwrap();
        let d = verify_filter_conditions(&w, &overlap).unwrap();
        assert!((d.max_leak - 0.5).abs() < 1e-15);
    }

    #[test]
    fn demo_without_distractors() {
        let spec = GenerativeSpec::new(
            vec![1.0, -2.0, 0.5, 3.0],
            vec![],
            0.0,
            SignalDistribution::StandardNormal,
            8,
        )
        .unwrap();
        let report = pattern_vs_filter_demo(&spec, 200, 1e-6).unwrap();
        assert!((report.filter_cosine - 1.0).abs() < 1e-9);
        assert!((report.pattern_cosine - 1.0).abs() < 1e-9);
    }

    #[test]
    fn demo_is_deterministic() {
        let spec = GenerativeSpec::random(8, 3, 0.1, 21).unwrap();
        assert_eq!(
            pattern_vs_filter_demo(&spec, 500, 0.0).unwrap(),
            pattern_vs_filter_demo(&spec, 500, 0.0).unwrap()
        );
        assert_eq!(sample(&spec, 40), sample(&spec, 40));
    }
}
