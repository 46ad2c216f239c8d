#![allow(dead_code)]

use dtd_core::{Activation, DenseLayer, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// ReLU MLP with uniform weights and non-zero biases.
pub fn random_mlp(sizes: &[usize], seed: u64) -> Mlp {
    let mut rng = rng(seed);
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = (3.0 / fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-scale..scale))
                .collect();
            let bias = (0..fan_out).map(|_| rng.random_range(-0.3..0.3)).collect();
            let act = if k + 2 == sizes.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            DenseLayer::new(weights, bias, fan_in, act).unwrap()
        })
        .collect();
    Mlp::new(layers).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Input with roughly `zero_fraction` coordinates exactly zero, the rest in [0, 1).
pub fn sparse_input(rng: &mut ChaCha8Rng, n: usize, zero_fraction: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < zero_fraction {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect()
}

/// Smallest |z| over all hidden pre-activations; large values mean the input
/// sits away from every ReLU kink.
pub fn kink_margin(mlp: &Mlp, x: &[f64]) -> f64 {
    let trace = mlp.forward_trace(x).unwrap();
    let hidden = trace.depth() - 1;
    trace.pre_activations[..hidden]
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Central finite differences of logit `target`.
pub fn finite_difference_gradient(mlp: &Mlp, x: &[f64], target: usize, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let fp = mlp.forward(&plus).unwrap()[target];
            let fm = mlp.forward(&minus).unwrap()[target];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
