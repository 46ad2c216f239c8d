use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Mlp;
use crate::dataio::Dataset;
use crate::error::{check_len, Error, Result};
use crate::linalg::axpy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Glorot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Drives initialization (through [`Mlp::init`]) and batch order.
    pub seed: u64,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 10,
            batch_size: 64,
            seed: 0,
            init: Init::Glorot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean softmax cross-entropy over the epoch, measured before each update.
    pub loss: f64,
    /// Fraction of training samples classified correctly during the epoch.
    pub accuracy: f64,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax in place; returns the cross-entropy for `label`.
fn softmax_cross_entropy(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let log_sum = sum.ln();
    let loss = log_sum - (logits[label].ln());
    for v in logits.iter_mut() {
        *v /= sum;
    }
    loss
}

fn validate(mlp: &Mlp, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len("dataset dimension", mlp.input_dim(), dataset.dim())?;
    let width = mlp.output_dim();
    if let Some((position, &label)) = dataset
        .labels()
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= width)
    {
        return Err(Error::LabelOutOfRange {
            label,
            position,
            max: (width - 1) as u8,
        });
    }
    Ok(())
}

/// Mini-batch SGD on softmax cross-entropy.
///
/// The input network is left untouched; the trained copy is returned along
/// with per-epoch statistics. Gradients are summed in sample order, so a fixed
/// seed gives bit-identical weights.
pub fn train(mlp: &Mlp, dataset: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, Vec<EpochStats>)> {
    validate(mlp, dataset)?;
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidNetwork(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let mut net = mlp.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    // Stream 0 of the seed is used by `Mlp::init`; batch order draws from stream 1.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    let mut grad_w: Vec<Vec<f64>> = net
        .layers()
        .iter()
        .map(|l| vec![0.0; l.weights().len()])
        .collect();
    let mut grad_b: Vec<Vec<f64>> = net
        .layers()
        .iter()
        .map(|l| vec![0.0; l.fan_out()])
        .collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grad_w.iter_mut().for_each(|g| g.fill(0.0));
            grad_b.iter_mut().for_each(|g| g.fill(0.0));
            let mut batch_loss = 0.0;
            for &i in chunk {
                let label = dataset.label(i) as usize;
                let trace = net.forward_trace(dataset.image(i))?;
                let mut delta = trace.logits().to_vec();
                if argmax(&delta) == label {
                    correct += 1;
                }
                batch_loss += softmax_cross_entropy(&mut delta, label);
                delta[label] -= 1.0;

                for l in (0..net.layers().len()).rev() {
                    let layer = &net.layers()[l];
                    let input = trace.layer_input(l);
                    let fan_in = layer.fan_in();
                    for (j, &d) in delta.iter().enumerate() {
                        if d != 0.0 {
                            axpy(d, input, &mut grad_w[l][j * fan_in..(j + 1) * fan_in]);
                        }
                        grad_b[l][j] += d;
                    }
                    if l > 0 {
                        let mut below = vec![0.0; fan_in];
                        for (j, &d) in delta.iter().enumerate() {
                            if d != 0.0 {
                                axpy(d, layer.row(j), &mut below);
                            }
                        }
                        let act = net.layers()[l - 1].activation();
                        for (b, &z) in below.iter_mut().zip(&trace.pre_activations[l - 1]) {
                            *b *= act.slope(z);
                        }
                        delta = below;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss;
            let step = -cfg.learning_rate / chunk.len() as f64;
            for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                axpy(step, &grad_w[l], layer.weights_mut());
                axpy(step, &grad_b[l], layer.bias_mut());
            }
        }
        let params_finite = net
            .layers()
            .iter()
            .all(|l| l.weights().iter().chain(l.bias()).all(|v| v.is_finite()));
        if !params_finite {
            return Err(Error::Divergence {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss: f64::NAN,
            });
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            accuracy: correct as f64 / dataset.len() as f64,
        });
    }
    Ok((net, history))
}

/// Fraction of samples whose arg-max logit equals the label; ties go to the
/// lowest index.
pub fn accuracy(mlp: &Mlp, dataset: &Dataset) -> Result<f64> {
    validate(mlp, dataset)?;
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        let logits = mlp.forward(dataset.image(i))?;
        if argmax(&logits) == dataset.label(i) as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, DenseLayer};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            let centre = if label == 0 { -2.0 } else { 2.0 };
            for _ in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                images.push(centre + 0.5 * e);
            }
            labels.push(label);
        }
        Dataset::new(images, 2, labels).unwrap()
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(200, 5);
        let net = Mlp::init(&[2, 8, 2], Init::Glorot, 11).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let (trained, history) = train(&net, &data, &cfg).unwrap();
        assert_eq!(history.len(), 20);
        assert!(accuracy(&trained, &data).unwrap() >= 0.99);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let data = blobs(10, 1);
        let net = Mlp::init(&[2, 3, 2], Init::Glorot, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, history) = train(&net, &data, &cfg).unwrap();
        assert_eq!(trained, net);
        assert!(history.is_empty());
    }

    #[test]
    fn same_seed_same_weights() {
        let data = blobs(64, 3);
        let net = Mlp::init(&[2, 6, 2], Init::Glorot, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 7,
            seed: 99,
            ..TrainConfig::default()
        };
        let (a, ha) = train(&net, &data, &cfg).unwrap();
        let (b, hb) = train(&net, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs(32, 8);
        let net = Mlp::init(&[2, 6, 2], Init::Glorot, 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&net, &data, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn accuracy_examples() {
        // Perfect classifier for the blobs: logit_1 - logit_0 = x1 + x2.
        let layer = DenseLayer::from_rows(
            &[vec![-1.0, -1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap();
        let perfect = Mlp::new(vec![layer]).unwrap();
        assert_eq!(accuracy(&perfect, &blobs(100, 7)).unwrap(), 1.0);

        // Constant output on ten balanced classes: ties go to class 0.
        let constant = Mlp::new(vec![DenseLayer::new(
            vec![0.0; 10],
            vec![0.0; 10],
            1,
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let images: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let balanced = Dataset::new(images, 1, labels).unwrap();
        assert!((accuracy(&constant, &balanced).unwrap() - 0.1).abs() < 1e-12);

        let one = Dataset::new(vec![3.0, 3.0], 2, vec![1]).unwrap();
        assert_eq!(accuracy(&perfect, &one).unwrap(), 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let net = Mlp::init(&[2, 2], Init::Glorot, 0).unwrap();
        let empty = Dataset::new(vec![], 2, vec![]).unwrap();
        assert!(matches!(accuracy(&net, &empty), Err(Error::EmptyDataset)));
        assert!(matches!(
            train(&net, &empty, &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }
}
